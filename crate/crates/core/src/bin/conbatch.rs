fn main() {
    std::process::exit(conbatch::cli::main_with_args(std::env::args_os()));
}
