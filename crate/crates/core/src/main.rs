fn main() {
    std::process::exit(godel_geo::cli::run());
}
