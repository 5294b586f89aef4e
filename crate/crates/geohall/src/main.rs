fn main() {
    std::process::exit(geohall::cli::run(std::env::args_os()));
}
