fn main() {
    std::process::exit(geomm::cli::run(std::env::args_os()));
}
