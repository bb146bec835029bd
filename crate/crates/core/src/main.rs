fn main() {
    std::process::exit(bns_hedge::cli::run(std::env::args_os()));
}
