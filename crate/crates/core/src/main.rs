fn main() {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    let code = sph2::cli::run(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
