fn main() {
    std::process::exit(padgan::cli::run_command(std::env::args_os()));
}
