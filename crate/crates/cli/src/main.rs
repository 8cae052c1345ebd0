use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use resmooth_cli::{apply_overrides, dump_lines, output_dir, parse_config, run, Mode, RunConfig};

#[derive(Parser)]
#[command(
    name = "resmooth",
    version,
    about = "Residual-smoothed continuation Newton-Krylov runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steady solve with the configured variant.
    Solve(RunArgs),
    /// Paired unsmoothed and smoothed steady solves.
    Sweep(RunArgs),
    /// Implicit time marching.
    Unsteady(RunArgs),
    /// Write the solver lines for the initial state.
    Lines(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    config: PathBuf,
    /// `section.key=value`, applied after the file; repeatable.
    #[arg(long = "override", short = 'o', value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn load(args: &RunArgs, mode: Option<Mode>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config =
        parse_config(&text).with_context(|| format!("in {}", args.config.display()))?;
    if let Some(mode) = mode {
        config.mode = mode;
    }
    apply_overrides(&config, &args.overrides)
}

fn main_inner() -> Result<i32> {
    let cli = Cli::parse();
    let (args, mode) = match &cli.command {
        Command::Solve(a) => (a, Some(Mode::Steady)),
        Command::Sweep(a) => (a, Some(Mode::Sweep)),
        Command::Unsteady(a) => (a, Some(Mode::Unsteady)),
        Command::Lines(a) => (a, None),
    };
    let config = load(args, mode)?;
    let dir = output_dir(&config);
    let mut out = std::io::stdout().lock();
    if mode.is_none() {
        let (path, text) = dump_lines(&config, &dir)?;
        let _ = writeln!(out, "{text}\nwrote {}", path.display());
        return Ok(0);
    }
    let result = run(&config, &dir)?;
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&result.summary)?);
    for f in &result.files {
        let _ = writeln!(out, "wrote {}", f.display());
    }
    Ok(result.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match main_inner() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
