fn main() {
    std::process::exit(exactk::cli::run(std::env::args_os()));
}
