fn main() {
    std::process::exit(tripgrav_cli::run(std::env::args_os()));
}
