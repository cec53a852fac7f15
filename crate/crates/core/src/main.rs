fn main() {
    std::process::exit(pqgram::cli::run(std::env::args_os()));
}
