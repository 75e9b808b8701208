fn main() {
    std::process::exit(bfnn_cli::run(std::env::args_os()));
}
