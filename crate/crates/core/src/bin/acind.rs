fn main() {
    std::process::exit(acind::cli::run(std::env::args_os()));
}
