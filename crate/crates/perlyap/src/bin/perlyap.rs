fn main() {
    std::process::exit(perlyap::cli::run(std::env::args()));
}
