fn main() {
    std::process::exit(soiltag::cli::main_with_args(std::env::args_os()));
}
