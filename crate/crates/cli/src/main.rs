fn main() {
    std::process::exit(sway_cli::run(std::env::args_os()));
}
