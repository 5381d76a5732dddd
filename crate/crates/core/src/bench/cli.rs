//! `msb` command-line front end.
//!
//! Exit status: 0 when every requested check passes, 1 when a check or run
//! fails, 2 on usage or configuration errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::accounting::{count_flops, count_params, efficiency_ratios, ModelConfig, Variant};
use super::data::{generate_sine, SineDatasetSpec};
use super::model::Forecaster;
use super::report::{FlopsSection, ParamsSection, RunReport};
use super::scaling::{scaling_report, WALL_CLOCK_SIZES};
use super::train::{train, TrainConfig};
use crate::autograd::Parameterized;
use crate::error::{Error, Result};
use crate::structured::meter;
use crate::tensor::Tensor;
use crate::verification::{run_all, CheckResult, VerifyConfig};

/// Parameter ratio band for the desk configuration.
pub const PARAM_RATIO_BAND: (f64, f64) = (0.15, 0.45);
/// FLOP ratio band for the desk configuration.
pub const FLOP_RATIO_BAND: (f64, f64) = (0.15, 0.50);
pub const WALL_CLOCK_BAND: (f64, f64) = (1.3, 1.8);
pub const SINE_MSE_TARGET: f64 = 0.05;

#[derive(Parser, Debug)]
#[command(name = "msb", version, about = "Monarch surrogate attention and FFN blocks: checks, accounting, training")]
pub struct Cli {
    /// Base random seed.
    #[arg(long, global = true, env = "MSB_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Write the run report here.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// JSON file with `model`, `train`, `data` and `verify` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the equivalence checks.
    Verify(VerifyArgs),
    #[command(subcommand)]
    Bench(BenchCommand),
    #[command(subcommand)]
    Train(TrainCommand),
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Seeds per randomized check.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Comma-separated check groups.
    #[arg(long, value_delimiter = ',')]
    pub only: Option<Vec<String>>,
    /// Replace every pinned threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum BenchCommand {
    /// Parameter counts, dense against surrogate.
    Params,
    /// Multiply-add ledgers, dense against surrogate.
    Flops,
    /// Log-log slopes of analytic counts and, optionally, wall-clock time.
    Scaling {
        #[arg(long, value_delimiter = ',', default_values_t = [256usize, 1024, 4096])]
        sizes: Vec<usize>,
        /// Also time the Monarch apply.
        #[arg(long)]
        wall_clock: bool,
        #[arg(long, value_delimiter = ',')]
        timed_sizes: Option<Vec<usize>>,
        /// Timing rounds over all sizes.
        #[arg(long, default_value_t = 9)]
        rounds: usize,
    },
}

#[derive(Subcommand, Debug)]
pub enum TrainCommand {
    /// Forecast a synthetic sine series.
    Sine(SineArgs),
}

#[derive(Args, Debug)]
pub struct SineArgs {
    #[arg(long)]
    pub period: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Write the generated series as CSV.
    #[arg(long)]
    pub dataset_out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum ReportCommand {
    /// Print a saved report.
    Show { path: PathBuf },
}

impl ValueEnum for Variant {
    fn value_variants<'a>() -> &'a [Self] {
        &[Variant::Dense, Variant::Surrogate]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Variant::Dense => "dense",
            Variant::Surrogate => "surrogate",
        }))
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<ModelConfig>,
    pub train: Option<TrainConfig>,
    pub data: Option<SineDatasetSpec>,
    pub verify: Option<VerifyFileConfig>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyFileConfig {
    pub seeds: Option<usize>,
    pub only: Option<Vec<String>>,
    pub threshold: Option<f64>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Distance of `v` outside `[lo, hi]`; NaN stays NaN.
fn band_excess(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if v.is_nan() {
        v
    } else {
        (lo - v).max(v - hi).max(0.0)
    }
}

fn band_check(name: &str, v: f64, band: (f64, f64)) -> CheckResult {
    CheckResult::new(format!("{name}[{},{}]", band.0, band.1), band_excess(v, band), 0.0, 1)
}

fn timed<T>(report: &mut RunReport, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    report.timings.insert(phase.to_string(), start.elapsed().as_secs_f64());
    Ok(out)
}

fn print_checks(checks: &[CheckResult]) {
    for c in checks {
        println!(
            "{} {} max_abs_diff={:.3e} threshold={:.1e} seeds={}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.max_abs_diff,
            c.threshold,
            c.seeds_run
        );
    }
}

fn bench_model(file: &FileConfig, seed: u64) -> ModelConfig {
    ModelConfig {
        seed,
        ..file.model.clone().unwrap_or_else(ModelConfig::desk)
    }
}

fn params_section(c: &ModelConfig) -> Result<ParamsSection> {
    let dense = count_params(&c.with_variant(Variant::Dense))?;
    let surrogate = count_params(&c.with_variant(Variant::Surrogate))?;
    Ok(ParamsSection {
        ratio: surrogate.total as f64 / dense.total as f64,
        dense,
        surrogate,
    })
}

/// Instantiates both variants and compares their stored parameter counts
/// with the closed form.
fn model_count_check(c: &ModelConfig) -> Result<CheckResult> {
    let mut diff = 0usize;
    for v in [Variant::Dense, Variant::Surrogate] {
        let cv = c.with_variant(v);
        let model = Forecaster::new(&cv, &mut ChaCha8Rng::seed_from_u64(c.seed))?;
        diff = diff.max(model.param_count().abs_diff(count_params(&cv)?.total));
    }
    Ok(CheckResult::new("param_count_matches_model", diff as f64, 0.0, 1))
}

/// One surrogate forward pass under the meter against the ledger.
fn meter_check(c: &ModelConfig, ledger_flops: u64) -> Result<(u64, CheckResult)> {
    let cs = c.with_variant(Variant::Surrogate);
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let model = Forecaster::new(&cs, &mut rng)?;
    let x = Tensor::randn(&[cs.seq_len, 1], 1.0, &mut rng);
    let (y, flops) = meter::measure(|| model.predict(&x));
    y?;
    let diff = flops.abs_diff(ledger_flops) as f64;
    Ok((flops, CheckResult::new("monarch_meter_matches_ledger", diff, 0.0, 1)))
}

fn run_command(cli: &Cli) -> Result<RunReport> {
    let file = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Verify(args) => {
            let fv = file.verify.clone().unwrap_or_default();
            let cfg = VerifyConfig {
                seeds: args.seeds.or(fv.seeds).unwrap_or(100),
                base_seed: cli.seed,
                threshold_override: args.threshold.or(fv.threshold),
                selection: args.only.clone().or(fv.only),
            };
            let mut report = RunReport::new("verify", serde_json::to_value(&cfg)?);
            report.checks = timed(&mut report, "verify", || run_all(&cfg))?;
            print_checks(&report.checks);
            Ok(report)
        }
        Command::Bench(BenchCommand::Params) => {
            let c = bench_model(&file, cli.seed);
            let mut report = RunReport::new("bench params", serde_json::to_value(&c)?);
            let section = timed(&mut report, "params", || params_section(&c))?;
            println!(
                "params: dense={} surrogate={} ratio={:.4}",
                section.dense.total, section.surrogate.total, section.ratio
            );
            report.checks.push(band_check("param_ratio_in_band", section.ratio, PARAM_RATIO_BAND));
            let counted = timed(&mut report, "instantiate", || model_count_check(&c))?;
            report.checks.push(counted);
            report.params = Some(section);
            print_checks(&report.checks);
            Ok(report)
        }
        Command::Bench(BenchCommand::Flops) => {
            let c = bench_model(&file, cli.seed);
            let mut report = RunReport::new("bench flops", serde_json::to_value(&c)?);
            let dense = count_flops(&c.with_variant(Variant::Dense))?;
            let surrogate = count_flops(&c.with_variant(Variant::Surrogate))?;
            let ratios = efficiency_ratios(&c)?;
            println!(
                "flops: dense={} surrogate={} ratio={:.4}",
                ratios.dense_flops, ratios.surrogate_flops, ratios.flop_ratio
            );
            let (metered, check) = timed(&mut report, "meter", || meter_check(&c, surrogate.monarch_flops()))?;
            report.checks.push(band_check("flop_ratio_in_band", ratios.flop_ratio, FLOP_RATIO_BAND));
            report.checks.push(check);
            report.flops = Some(FlopsSection {
                dense,
                surrogate,
                dense_flops: ratios.dense_flops,
                surrogate_flops: ratios.surrogate_flops,
                ratio: ratios.flop_ratio,
                meter_flops: Some(metered),
            });
            print_checks(&report.checks);
            Ok(report)
        }
        Command::Bench(BenchCommand::Scaling {
            sizes,
            wall_clock,
            timed_sizes,
            rounds,
        }) => {
            let timed_set: Option<Vec<usize>> = match (wall_clock, timed_sizes) {
                (_, Some(t)) => Some(t.clone()),
                (true, None) => Some(WALL_CLOCK_SIZES.to_vec()),
                (false, None) => None,
            };
            let config = serde_json::json!({
                "sizes": sizes,
                "timed_sizes": timed_set,
                "rounds": rounds,
            });
            let mut report = RunReport::new("bench scaling", config);
            let s = timed(&mut report, "scaling", || {
                scaling_report(sizes, timed_set.as_deref(), *rounds, cli.seed)
            })?;
            println!("monarch slope {:.6}", s.monarch_slope);
            println!("dense attention slope {:.6}", s.dense_slope);
            report.checks.push(CheckResult::new("monarch_flop_slope", (s.monarch_slope - 1.5).abs(), 1e-9, 1));
            report.checks.push(CheckResult::new("dense_flop_slope", (s.dense_slope - 2.0).abs(), 1e-9, 1));
            if let Some(w) = s.wall_clock_slope {
                println!("wall-clock slope {w:.4}");
                report.checks.push(band_check("wall_clock_slope_in_band", w, WALL_CLOCK_BAND));
            }
            report.scaling = Some(s);
            print_checks(&report.checks);
            Ok(report)
        }
        Command::Train(TrainCommand::Sine(args)) => {
            let mut model = file.model.clone().unwrap_or_else(ModelConfig::sine_toy);
            model.seed = cli.seed;
            if let Some(v) = args.variant {
                model.variant = v;
            }
            let mut data = file.data.clone().unwrap_or_default();
            data.period = args.period.unwrap_or(data.period);
            data.samples = args.samples.unwrap_or(data.samples);
            let mut tc = file.train.clone().unwrap_or_default();
            tc.epochs = args.epochs.unwrap_or(tc.epochs);
            tc.lr = args.lr.unwrap_or(tc.lr);
            tc.batch = args.batch.unwrap_or(tc.batch);
            let config = serde_json::json!({ "model": model, "data": data, "train": tc });
            let mut report = RunReport::new("train sine", config);
            if let Some(path) = &args.dataset_out {
                let ds = generate_sine(&data)?;
                ds.write_csv(std::fs::File::create(path)?)?;
            }
            let t = timed(&mut report, "train", || train(&model, &data, &tc))?;
            println!(
                "best epoch {} of {}: val MSE {:.6}, test MSE {:.6}, test MAE {:.6}",
                t.best_epoch, tc.epochs, t.best_val_loss, t.test_mse, t.test_mae
            );
            if let Some(f) = &t.failure {
                println!("run failed: {f}");
            }
            report.checks.push(CheckResult::new("sine_test_mse", t.test_mse, SINE_MSE_TARGET, 1));
            report.training = Some(t);
            print_checks(&report.checks);
            Ok(report)
        }
        Command::Report(ReportCommand::Show { path }) => {
            let report = RunReport::load(path)?;
            match cli.format {
                Format::Json => println!("{}", report.to_json()?),
                Format::Csv => print!("{}", report.to_csv()?),
            }
            Ok(report)
        }
    }
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let report = match run_command(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return if matches!(e, Error::Config(_)) { 2 } else { 1 };
        }
    };
    let is_show = matches!(cli.command, Command::Report(_));
    if let (Some(out), false) = (&cli.out, is_show) {
        if let Err(e) = report.write(out, cli.format == Format::Csv) {
            eprintln!("error: {e}");
            return 1;
        }
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    if !is_show {
        println!("{} checks, {} failed", report.checks.len(), failed);
    }
    if report.all_passed() {
        0
    } else {
        1
    }
}
