fn main() {
    std::process::exit(bugtriage::cli::main_with_args(std::env::args_os()));
}
