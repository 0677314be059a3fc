fn main() {
    std::process::exit(vertical_cure::cli::run(std::env::args_os()));
}
