fn main() {
    std::process::exit(fieldstore::cli::run(std::env::args_os()));
}
