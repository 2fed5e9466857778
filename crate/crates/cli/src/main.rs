fn main() {
    std::process::exit(perfdrift::cli::run(std::env::args_os()));
}
