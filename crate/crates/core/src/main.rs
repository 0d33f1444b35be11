fn main() {
    std::process::exit(floquet_forge::cli::main_with(std::env::args_os()));
}
