fn main() {
    std::process::exit(emftd::cli::main_with_args(std::env::args_os()));
}
