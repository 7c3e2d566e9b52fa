fn main() {
    std::process::exit(dualtrack::cli::run(std::env::args_os()));
}
