fn main() {
    std::process::exit(allact::cli::run_command(std::env::args_os()));
}
