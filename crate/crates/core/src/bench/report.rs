//! Self-describing run reports: JSON primary, CSV flattening.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::accounting::{EfficiencyRatios, FlopLedger, ParamCounts};
use super::scaling::ScalingReport;
use super::train::TrainingReport;
use crate::error::{Error, Result};
use crate::verification::CheckResult;

pub const SCHEMA_VERSION: &str = "msb.run-report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsSection {
    pub dense: ParamCounts,
    pub surrogate: ParamCounts,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlopsSection {
    pub dense: FlopLedger,
    pub surrogate: FlopLedger,
    pub dense_flops: u64,
    pub surrogate_flops: u64,
    pub ratio: f64,
    /// FLOPs the Monarch meter recorded for one surrogate forward pass.
    pub meter_flops: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    pub command: String,
    pub config: Value,
    pub checks: Vec<CheckResult>,
    pub params: Option<ParamsSection>,
    pub flops: Option<FlopsSection>,
    pub scaling: Option<ScalingReport>,
    pub training: Option<TrainingReport>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(command: impl Into<String>, config: Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            command: command.into(),
            config,
            checks: Vec::new(),
            params: None,
            flops: None,
            scaling: None,
            training: None,
            timings: BTreeMap::new(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed) && self.training.as_ref().is_none_or(|t| !t.failed)
    }

    pub fn efficiency(&self) -> Option<EfficiencyRatios> {
        let (p, f) = (self.params.as_ref()?, self.flops.as_ref()?);
        Some(EfficiencyRatios {
            dense_params: p.dense.total,
            surrogate_params: p.surrogate.total,
            param_ratio: p.ratio,
            dense_flops: f.dense_flops,
            surrogate_flops: f.surrogate_flops,
            flop_ratio: f.ratio,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One `key,value` row per leaf, keys are dotted paths.
    pub fn to_csv(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        let mut rows = Vec::new();
        flatten(&value, String::new(), &mut rows);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(["key", "value"])?;
        for (k, v) in rows {
            w.write_record([k, v])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write(&self, path: &Path, csv: bool) -> Result<()> {
        let text = if csv { self.to_csv()? } else { self.to_json()? };
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text)?;
        validate_report(&value)?;
        Ok(serde_json::from_value(value)?)
    }
}

fn flatten(v: &Value, prefix: String, out: &mut Vec<(String, String)>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                flatten(child, join(k), out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                flatten(child, join(&i.to_string()), out);
            }
        }
        Value::String(s) => out.push((prefix, s.clone())),
        Value::Null => out.push((prefix, String::new())),
        other => out.push((prefix, other.to_string())),
    }
}

fn schema_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(format!("invalid run report: {}", msg.into())))
}

/// Structural validation of a parsed report.
pub fn validate_report(v: &Value) -> Result<()> {
    let Some(obj) = v.as_object() else {
        return schema_err("top level is not an object");
    };
    for key in ["schema_version", "config", "checks", "params", "flops", "scaling", "training"] {
        if !obj.contains_key(key) {
            return schema_err(format!("missing key `{key}`"));
        }
    }
    if obj["schema_version"].as_str() != Some(SCHEMA_VERSION) {
        return schema_err(format!("schema_version is {}, expected {SCHEMA_VERSION}", obj["schema_version"]));
    }
    let Some(checks) = obj["checks"].as_array() else {
        return schema_err("`checks` is not an array");
    };
    for (i, c) in checks.iter().enumerate() {
        let name = c.get("name").and_then(Value::as_str);
        let threshold = c.get("threshold").and_then(Value::as_f64);
        let passed = c.get("passed").and_then(Value::as_bool);
        let seeds = c.get("seeds_run").and_then(Value::as_u64);
        let diff = c.get("max_abs_diff");
        let (Some(_), Some(threshold), Some(passed), Some(_), Some(diff)) = (name, threshold, passed, seeds, diff) else {
            return schema_err(format!("check {i} lacks a required field"));
        };
        // A non-finite difference serializes as null and can never pass.
        let consistent = match diff.as_f64() {
            Some(d) => passed == (d <= threshold),
            None if diff.is_null() => !passed,
            None => false,
        };
        if !consistent {
            return schema_err(format!("check {i} has `passed` inconsistent with its threshold"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        let mut r = RunReport::new("verify", serde_json::json!({"seed": 0}));
        r.checks.push(CheckResult::new("a", 1e-12, 1e-10, 3));
        r.timings.insert("verify".into(), 0.5);
        r
    }

    #[test]
    fn json_roundtrip_validates() {
        let r = sample();
        let v: Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        validate_report(&v).unwrap();
        let back: RunReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn tampered_reports_are_rejected() {
        let mut v = serde_json::to_value(sample()).unwrap();
        v["checks"][0]["passed"] = Value::Bool(false);
        assert!(validate_report(&v).is_err());
        let mut v = serde_json::to_value(sample()).unwrap();
        v.as_object_mut().unwrap().remove("flops");
        assert!(validate_report(&v).is_err());
    }

    #[test]
    fn nan_difference_fails_and_validates() {
        let mut r = sample();
        r.checks.push(CheckResult::new("nan", f64::NAN, 1.0, 1));
        assert!(!r.all_passed());
        let v: Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        validate_report(&v).unwrap();
        let back: RunReport = serde_json::from_value(v).unwrap();
        assert!(back.checks[1].max_abs_diff.is_nan());
    }

    #[test]
    fn csv_flattening() {
        let csv = sample().to_csv().unwrap();
        assert!(csv.starts_with("key,value\n"));
        assert!(csv.contains("checks.0.name,a\n"));
        assert!(csv.contains("schema_version,msb.run-report/1\n"));
    }
}
