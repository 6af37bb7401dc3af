fn main() {
    std::process::exit(sparseseg::harness::cli::main_with_args(std::env::args_os()));
}
