fn main() {
    std::process::exit(fsqkd::cli::run(std::env::args_os()));
}
