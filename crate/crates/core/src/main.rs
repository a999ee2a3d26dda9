fn main() {
    std::process::exit(soilmap::cli::run(std::env::args_os()));
}
