fn main() {
    std::process::exit(twpa_core::cli::main_with_args(std::env::args_os()));
}
