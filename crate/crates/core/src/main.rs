fn main() {
    std::process::exit(bonelabel::cli::run(std::env::args_os()));
}
