use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use lplab::cli::{self, CliError, Format, Subcommand};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Density,
    Hfunc,
    Pole,
    Smatrix,
    Evolve,
    Survival,
    Galilean,
    Report,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

/// Resonance lab for the relativistic Lee-Friedrichs model.
#[derive(Parser, Debug)]
#[command(name = "lplab", version)]
struct Args {
    #[arg(value_enum)]
    subcommand: Cmd,
    /// Run configuration (INI).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; overrides `[output] format`.
    #[arg(long, value_enum)]
    format: Option<OutFormat>,
}

fn run(args: Args) -> Result<i32, CliError> {
    cli::init_threads()?;
    let text = std::fs::read_to_string(&args.config).map_err(|source| CliError::Io {
        path: args.config.clone(),
        source,
    })?;
    let cfg = cli::parse_config(&text)?;
    let sub: Subcommand = format!("{:?}", args.subcommand).to_ascii_lowercase().parse()?;
    let out = args.out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let format = match args.format {
        Some(OutFormat::Csv) => Format::Csv,
        Some(OutFormat::Json) => Format::Json,
        None => cfg.output.format,
    };
    let outcome = cli::run_subcommand(sub, &cfg, &out, format)?;
    for f in &outcome.files {
        log::info!("wrote {}", f.display());
    }
    for msg in &outcome.failures {
        eprintln!("error: {msg}");
    }
    Ok(outcome.exit_code)
}

fn execute(args: Args) -> i32 {
    match run(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    ExitCode::from(execute(Args::parse()) as u8)
}
