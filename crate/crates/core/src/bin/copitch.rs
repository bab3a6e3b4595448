fn main() {
    std::process::exit(copitch::cli::run(std::env::args_os()));
}
