use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use driftlab_cli::config::Format;
use driftlab_cli::{load_config, run, CliError, Overrides};

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// Simulate and classify time-inhomogeneous random walks.
#[derive(Parser)]
#[command(name = "driftlab", version, about)]
struct Args {
    /// TOML run configuration.
    config: PathBuf,
    /// Master seed (overrides the config and DRIFTLAB_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Exit 1 on an inconclusive verdict or a failed check.
    #[arg(long)]
    strict: bool,
    /// Worker threads (0 = available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Override a config key, e.g. `--set field.c=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match execute(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("driftlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(args: &Args) -> Result<u8, CliError> {
    let text = driftlab_cli::run::read_config(&args.config)?;
    let overrides = Overrides {
        set: args.set.clone(),
        seed: args.seed,
        output: args.output.clone(),
        format: args.format.map(|f| match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }),
        strict: args.strict,
        workers: args.workers,
    };
    let env_seed = std::env::var("DRIFTLAB_SEED").ok();
    let cfg = load_config(&text, &overrides, env_seed.as_deref())?;
    if args.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(0);
    }
    let outcome = run(&cfg)?;
    println!("{}", outcome.summary);
    Ok(outcome.exit_code(cfg.strict))
}
