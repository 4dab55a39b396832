fn main() {
    std::process::exit(snowframe_cli::run_cli(std::env::args_os()));
}
