fn main() {
    std::process::exit(condition_aware::cli::run(std::env::args_os()));
}
