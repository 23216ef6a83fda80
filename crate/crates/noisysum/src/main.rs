fn main() {
    std::process::exit(noisysum::cli::main_with_args(std::env::args_os()));
}
