use clap::Parser;
use radiosense_platform::cli::{cmd_edge, EdgeArgs};

#[derive(Parser)]
#[command(name = "edge", about = "Gateway edge daemon")]
struct Cli {
    #[command(flatten)]
    args: EdgeArgs,
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprintln!("{e}");
            std::process::exit(1);
        }
        Err(e) => {
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Err(e) = cmd_edge(&cli.args) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code);
    }
}
