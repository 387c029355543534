use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use fimsketch_cli::config::ConfigError;
use fimsketch_cli::{emit_density, exit_code, reproduce_tables, run_scenario, ScenarioConfig, TablesOptions};
use fimsketch_core::Preset;

#[derive(Parser)]
#[command(name = "fimsketch", version, about = "Sensor placement by sketched Fisher information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario: `run [CONFIG] [--key value ...]`.
    Run {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "CONFIG] [--KEY VALUE")]
        args: Vec<String>,
    },
    /// Write the optimal sampling density: `density [CONFIG] [--key value ...] --out FILE`.
    Density {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "CONFIG] [--KEY VALUE")]
        args: Vec<String>,
    },
    /// Reproduce the fixed-source and source-design comparison tables.
    Tables {
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "tables")]
        out: PathBuf,
        #[arg(long, default_value = "systemC")]
        scenario: Preset,
        #[arg(long, default_value_t = 30)]
        nx: usize,
        #[arg(long, default_value_t = 18)]
        c: usize,
        /// Greedy iterations in fixed-source mode.
        #[arg(long, default_value_t = 25)]
        iters: usize,
        /// Greedy iterations in source-design mode.
        #[arg(long, default_value_t = 60)]
        source_iters: usize,
    },
}

/// Splits `[CONFIG] [--key value ...]`, pulling out `--out` when asked.
fn split_args(args: &[String], take_out: bool) -> Result<(Option<PathBuf>, Vec<String>, Option<PathBuf>), ConfigError> {
    let (config, rest) = match args.first() {
        Some(a) if !a.starts_with("--") => (Some(PathBuf::from(a)), &args[1..]),
        _ => (None, args),
    };
    let mut overrides = Vec::new();
    let mut out = None;
    let mut it = rest.iter();
    while let Some(a) = it.next() {
        if take_out && a == "--out" {
            out = Some(PathBuf::from(it.next().ok_or_else(|| ConfigError::MissingValue(a.clone()))?));
        } else {
            overrides.push(a.clone());
        }
    }
    Ok((config, overrides, out))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { args } => {
            let (config, overrides, _) = split_args(&args, false)?;
            let cfg = ScenarioConfig::load(config.as_deref(), &overrides)?;
            let out = run_scenario(&cfg)?;
            for r in &out.reports {
                println!(
                    "{:<16} c={:<4} lambda_min={:<12} c_inv={:.4e}",
                    r.method_label(),
                    r.c,
                    r.lambda_min.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into()),
                    r.c_inv
                );
            }
            println!("artifacts in {}", out.dir.display());
        }
        Command::Density { args } => {
            let (config, overrides, out) = split_args(&args, true)?;
            let cfg = ScenarioConfig::load(config.as_deref(), &overrides)?;
            let path = out.unwrap_or_else(|| cfg.output.join("density.csv"));
            emit_density(&cfg, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Tables {
            seeds,
            out,
            scenario,
            nx,
            c,
            iters,
            source_iters,
        } => {
            if seeds.is_empty() {
                return Err(ConfigError::Invalid {
                    key: "seeds",
                    reason: "need at least one seed".into(),
                }
                .into());
            }
            let opts = TablesOptions {
                scenario,
                nx,
                c,
                fixed_iterations: iters,
                source_iterations: source_iters,
                ..TablesOptions::default()
            };
            let tables = reproduce_tables(&seeds, &opts)?;
            tables.write(&out)?;
            fimsketch_cli::tables::write_summary(&tables.fixed_summary, std::io::stdout())?;
            fimsketch_cli::tables::write_summary(&tables.source_summary, std::io::stdout())?;
            println!("tables in {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
