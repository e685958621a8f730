fn main() {
    std::process::exit(tapsb::harness::cli::main());
}
