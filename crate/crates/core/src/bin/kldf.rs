fn main() {
    let code = kld_filter::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
