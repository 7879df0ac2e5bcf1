use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use jumpsde_cli::{execute, load_config, Command, EXIT_ERROR};

/// Simulate jump SDEs with discontinuous coefficients and run the uniqueness experiments.
#[derive(Parser, Debug)]
#[command(name = "jumpsde", version)]
struct Cli {
    command: Command,
    /// TOML run config; defaults apply to anything it leaves out.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set numerics.h=1e-4`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory, overriding `output.directory`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Worker threads for per-seed batches.
    #[arg(long, env = "JUMPSDE_WORKERS")]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<i32> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let config = load_config(cli.config.as_deref(), &cli.overrides)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&config.output.directory));
    let (report, code) = execute(cli.command, &config, &dir)?;
    println!("{} {}", report.display(), config.hash());
    Ok(code)
}
