fn main() {
    std::process::exit(occsym_core::cli::run_cli(std::env::args_os()));
}
