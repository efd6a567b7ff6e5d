fn main() {
    std::process::exit(mimicry::cli::main_with_args(std::env::args_os()));
}
