fn main() {
    std::process::exit(sparsefeat::cli::main_with_args(std::env::args_os()));
}
