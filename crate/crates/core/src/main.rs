fn main() {
    std::process::exit(typology::cli::run());
}
