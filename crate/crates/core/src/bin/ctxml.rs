fn main() {
    std::process::exit(contextualized::cli::run(std::env::args_os()));
}
