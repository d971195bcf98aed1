fn main() {
    std::process::exit(stealth_lab::cli::run_from_env());
}
