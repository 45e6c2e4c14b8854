fn main() {
    std::process::exit(weldfcs::cli::run(std::env::args_os()));
}
