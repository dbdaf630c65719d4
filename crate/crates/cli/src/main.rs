fn main() {
    std::process::exit(cbplab_cli::run(std::env::args_os()));
}
