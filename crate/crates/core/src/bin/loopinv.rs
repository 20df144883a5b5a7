fn main() {
    std::process::exit(loopinv::cli::main_with_args(std::env::args_os()));
}
