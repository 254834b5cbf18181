fn main() {
    std::process::exit(sevmil::cli::run(std::env::args_os()));
}
