fn main() {
    std::process::exit(chargof::cli::main_with_args(std::env::args_os()));
}
