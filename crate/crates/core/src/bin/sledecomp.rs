fn main() {
    std::process::exit(sledecomp::cli::main_with_args(std::env::args_os()));
}
