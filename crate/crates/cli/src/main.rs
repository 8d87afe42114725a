use clap::Parser;
use floquet_cli::{error_code, execute, Cli};

fn main() {
    let arguments: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli, &arguments) {
        Ok(done) => {
            println!("{}", done.dir.display());
            std::process::exit(done.status.code());
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(error_code(&e));
        }
    }
}
