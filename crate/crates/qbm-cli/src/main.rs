fn main() {
    let code = qbm_cli::run(std::env::args_os());
    std::process::exit(code);
}
