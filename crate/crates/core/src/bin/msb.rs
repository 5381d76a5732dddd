fn main() {
    std::process::exit(msb::bench::cli::cli_main(std::env::args_os()));
}
