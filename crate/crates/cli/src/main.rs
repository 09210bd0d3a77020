fn main() {
    std::process::exit(mewm_cli::run(std::env::args_os()));
}
