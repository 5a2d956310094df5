fn main() {
    std::process::exit(reflected_hjb::harness::run_cli(std::env::args_os()));
}
