fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(horizon_limit_cli::main_with(std::env::args_os()));
}
