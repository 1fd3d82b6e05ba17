fn main() {
    std::process::exit(fundiff::cli::run(std::env::args_os()));
}
