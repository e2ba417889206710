fn main() {
    singstab::cli::init_logging();
    std::process::exit(singstab::cli::main_with_args(std::env::args_os()));
}
