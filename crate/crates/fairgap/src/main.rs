fn main() {
    std::process::exit(fairgap::cli::run(std::env::args_os()));
}
