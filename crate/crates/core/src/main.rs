fn main() {
    std::process::exit(multistain::cli::run(std::env::args_os()));
}
