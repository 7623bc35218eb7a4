fn main() {
    std::process::exit(lanekit::cli::run_cli(std::env::args_os()));
}
