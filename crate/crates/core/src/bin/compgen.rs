fn main() {
    std::process::exit(compgen::cli::run(std::env::args_os()));
}
