fn main() {
    std::process::exit(viscobeam::cli::main_with_args(std::env::args_os()));
}
