fn main() {
    std::process::exit(poitune::cli::run(std::env::args_os()));
}
