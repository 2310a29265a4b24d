fn main() {
    std::process::exit(frontfix::cli::run_from(std::env::args_os()));
}
