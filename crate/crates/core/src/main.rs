fn main() {
    std::process::exit(ivtest::cli::run());
}
