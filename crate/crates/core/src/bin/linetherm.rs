fn main() {
    std::process::exit(linetherm::cli::run(std::env::args_os()));
}
