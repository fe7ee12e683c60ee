fn main() {
    std::process::exit(soiltn::cli::run());
}
