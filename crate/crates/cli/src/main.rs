fn main() {
    std::process::exit(ifdiv_cli::main_with(std::env::args_os()));
}
