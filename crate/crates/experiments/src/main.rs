fn main() {
    std::process::exit(rsmf_experiments::cli::run(std::env::args_os()));
}
