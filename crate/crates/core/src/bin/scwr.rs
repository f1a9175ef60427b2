fn main() {
    std::process::exit(scwr::cli::main_with_args(std::env::args_os()));
}
