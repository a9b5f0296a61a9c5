fn main() {
    std::process::exit(shrinker::cli::cli_main(std::env::args_os()));
}
