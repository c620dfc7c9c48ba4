fn main() {
    std::process::exit(mmot_core::cli::run(std::env::args_os()));
}
