fn main() {
    std::process::exit(riemann_bci::cli::run(std::env::args_os()));
}
