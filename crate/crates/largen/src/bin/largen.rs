fn main() {
    std::process::exit(largen::cli::run());
}
