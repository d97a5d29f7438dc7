fn main() {
    std::process::exit(prefixsim::cli::run(std::env::args_os()));
}
