fn main() {
    std::process::exit(driftbench::cli::run(std::env::args_os()));
}
