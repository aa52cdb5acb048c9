fn main() {
    std::process::exit(modelgif::cli::main_with_args(std::env::args_os()));
}
