fn main() {
    std::process::exit(bcosfire_cli::run(std::env::args_os()));
}
