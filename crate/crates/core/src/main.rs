fn main() {
    std::process::exit(ducct_core::cli::main_with_args(std::env::args_os()));
}
