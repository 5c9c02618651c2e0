fn main() {
    std::process::exit(selfdenoise::cli::run(std::env::args().collect()));
}
