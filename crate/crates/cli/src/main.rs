fn main() {
    std::process::exit(reverb_match_cli::run_cli(std::env::args_os()));
}
