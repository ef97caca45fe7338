fn main() {
    std::process::exit(tc_cli::main_with_args(std::env::args_os()));
}
