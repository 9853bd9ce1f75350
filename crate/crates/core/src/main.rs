fn main() {
    env_logger::init();
    std::process::exit(contactlab::cli::run(std::env::args_os()));
}
