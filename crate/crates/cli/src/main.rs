fn main() {
    std::process::exit(piston_cli::main_with(std::env::args_os()));
}
