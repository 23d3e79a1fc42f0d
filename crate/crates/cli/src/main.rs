//! `fracap --config run.json [--out DIR] [--lenient] [--threads N] [--seed N]`

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

#[derive(Parser, Debug)]
#[command(
    name = "fracap",
    version,
    about = "Fractional variable-exponent modulars, norms and capacities on grids"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "./out")]
    out: PathBuf,
    /// Warn about unknown config keys instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Row partitions for the pair sums.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
    /// Suite seed override.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let opts = run::Options {
        out: cli.out,
        threads: cli.threads as usize,
        seed: cli.seed,
    };
    let result =
        config::parse_config(&cli.config, cli.lenient).and_then(|loaded| run::run(&loaded, &opts));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({
                "level": "error",
                "kind": e.kind(),
                "exit": e.exit_code(),
                "message": e.message(),
            });
            eprintln!("{line}");
            ExitCode::from(e.exit_code())
        }
    }
}
