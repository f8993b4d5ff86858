fn main() {
    std::process::exit(emi_core::cli::run(std::env::args_os()));
}
