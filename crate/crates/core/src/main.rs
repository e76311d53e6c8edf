fn main() {
    std::process::exit(ehub::cli::run(std::env::args_os()));
}
