fn main() {
    std::process::exit(nvpd::cli::main_with_args(std::env::args_os()));
}
