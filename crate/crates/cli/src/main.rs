fn main() {
    std::process::exit(pamlab_cli::main_with_args(std::env::args_os()));
}
