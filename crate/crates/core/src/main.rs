fn main() {
    std::process::exit(udot::cli::run(std::env::args_os()));
}
