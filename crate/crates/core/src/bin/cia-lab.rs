fn main() {
    std::process::exit(cia_lab::cli::main_with_args(std::env::args_os()));
}
