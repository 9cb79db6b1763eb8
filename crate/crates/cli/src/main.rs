fn main() {
    std::process::exit(survstack_cli::main_with_args(std::env::args_os()));
}
