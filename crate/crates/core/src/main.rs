fn main() {
    std::process::exit(mudkit::cli::run(std::env::args_os()));
}
