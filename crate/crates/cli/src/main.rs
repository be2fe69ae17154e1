use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let args = qparity_cli::Args::parse();
    if let Err(e) = qparity_cli::run(&args) {
        log::error!("{e}");
        std::process::exit(e.exit_code());
    }
}
