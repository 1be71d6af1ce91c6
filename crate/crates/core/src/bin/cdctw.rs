fn main() {
    std::process::exit(cdctw::cli::run(std::env::args_os()));
}
