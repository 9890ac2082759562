fn main() {
    std::process::exit(deepicm::cli::run(std::env::args_os()));
}
