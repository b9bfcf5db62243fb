fn main() {
    std::process::exit(apr_cli::run(std::env::args_os()));
}
