fn main() {
    let code = roesser2d::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
