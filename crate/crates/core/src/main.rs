fn main() {
    std::process::exit(covq::cli::main_with_args(std::env::args_os()));
}
