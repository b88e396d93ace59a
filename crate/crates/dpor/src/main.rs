fn main() {
    std::process::exit(dpor::cli::main_with_args(std::env::args()));
}
