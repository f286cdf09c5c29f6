fn main() {
    std::process::exit(faultscope::cli::main_with_args(std::env::args()));
}
