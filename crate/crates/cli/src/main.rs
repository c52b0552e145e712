fn main() {
    mdctgan_cli::init_logging();
    std::process::exit(mdctgan_cli::run(std::env::args_os()));
}
