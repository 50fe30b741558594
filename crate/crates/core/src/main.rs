fn main() {
    std::process::exit(canopy::cli::main_with_args(std::env::args_os()));
}
