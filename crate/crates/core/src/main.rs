fn main() {
    std::process::exit(bferl::cli::run_cli(std::env::args_os()));
}
