fn main() {
    std::process::exit(bisel_cli::run(std::env::args_os()));
}
