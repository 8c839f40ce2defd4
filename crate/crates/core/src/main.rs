fn main() {
    std::process::exit(twistflow::cli::run(std::env::args_os()));
}
