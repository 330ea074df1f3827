fn main() {
    std::process::exit(jumplab_cli::run(std::env::args_os()));
}
