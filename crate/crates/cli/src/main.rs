fn main() {
    std::process::exit(demix_cli::run(std::env::args_os()));
}
