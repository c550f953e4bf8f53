fn main() {
    std::process::exit(weaver_cli::run(std::env::args_os()));
}
