fn main() {
    std::process::exit(jumpdiff_cli::run(std::env::args_os()));
}
