fn main() {
    std::process::exit(cogcode::cli::run(std::env::args_os()));
}
