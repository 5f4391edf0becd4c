fn main() {
    std::process::exit(lti_bounds::cli::run(std::env::args_os()));
}
