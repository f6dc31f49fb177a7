fn main() {
    std::process::exit(srea_cli::run(std::env::args_os()));
}
