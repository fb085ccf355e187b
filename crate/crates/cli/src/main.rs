fn main() {
    let code = dualqed_cli::run(std::env::args_os());
    std::process::exit(code);
}
