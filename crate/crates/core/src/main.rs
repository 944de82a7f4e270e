fn main() {
    env_logger::init();
    let code = noisy_rd::cli::run(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
