fn main() {
    std::process::exit(janus::cli::run_from_env());
}
