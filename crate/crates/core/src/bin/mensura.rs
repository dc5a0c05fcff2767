fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("MENSURA_LOG")).init();
    std::process::exit(mensura::cli::run(std::env::args_os()));
}
