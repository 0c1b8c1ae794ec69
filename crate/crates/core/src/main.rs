fn main() {
    std::process::exit(wsss::cli::run(std::env::args_os()));
}
