fn main() {
    let code = sweepkit::cli::run(std::env::args_os());
    std::process::exit(code);
}
