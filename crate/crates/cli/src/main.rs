//! Command-line driver for the gramlab experiments.
//!
//! Every subcommand writes its tables as CSV into the output directory
//! together with a `<command>.manifest.json` sidecar. Stochastic commands
//! require `--seed`; identical flags and seed give identical CSV bytes for
//! any worker count.

mod args;
mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use commands::*;

#[derive(Debug, Parser)]
#[command(name = "gramlab", version, about = "Gram-tuple recovery and stability experiments")]
struct Cli {
    /// Directory for CSV, JSON and manifest outputs.
    #[arg(long, global = true, env = "GRAMLAB_OUT_DIR", default_value = "gramlab-out")]
    out: PathBuf,
    /// Worker threads. Defaults to all cores; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print dim V, k(H), K and the dimension gates.
    KBound(KBoundArgs),
    /// Orbit metrics and the sandwich check on random or given pairs.
    Metrics(MetricsArgs),
    /// Empirical bi-Lipschitz constants of a prior.
    Lipschitz(LipschitzArgs),
    /// Search for transversality violations. Exits with 2 on a violation.
    Transversality(TransversalityArgs),
    /// Tables for the segment and plane examples.
    Counterexample(CounterexampleArgs),
    /// Recover signals from exact or perturbed Gram tuples.
    Recover(RecoverArgs),
    /// MRA sample-complexity grid.
    Mra(MraArgs),
    /// Gram-level cryo-EM toy model.
    Cryoem(CryoemArgs),
    /// Run a subcommand described by a JSON file: `{"command": "...", "<flag>": value, ...}`.
    Run { config: PathBuf },
}

/// Turn a JSON config into command-line arguments. Keys are flag names;
/// `true` adds a switch, arrays become comma-separated lists.
fn config_to_argv(path: &PathBuf) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).context("parsing config")?;
    let Some(obj) = value.as_object() else {
        bail!("config must be a JSON object");
    };
    let command = obj
        .get("command")
        .and_then(|c| c.as_str())
        .context("config needs a \"command\" string")?;
    if command == "run" {
        bail!("nested run configs are not allowed");
    }
    let mut argv = vec!["gramlab".to_string(), command.to_string()];
    for (k, v) in obj {
        if k == "command" {
            continue;
        }
        let flag = format!("--{}", k.replace('_', "-"));
        let scalar = |v: &serde_json::Value| match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        match v {
            serde_json::Value::Bool(true) => argv.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                argv.push(flag);
                argv.push(items.iter().map(scalar).collect::<Vec<_>>().join(","));
            }
            serde_json::Value::Object(_) => {
                argv.push(flag);
                argv.push(v.to_string());
            }
            other => {
                argv.push(flag);
                argv.push(scalar(other));
            }
        }
    }
    Ok(argv)
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker pool")?;
    }
    let out = cli.out.as_path();
    let code = match cli.command {
        Command::KBound(a) => cmd_k_bound(&a)?,
        Command::Metrics(a) => cmd_metrics(&a, out)?,
        Command::Lipschitz(a) => cmd_lipschitz(&a, out)?,
        Command::Transversality(a) => cmd_transversality(&a, out)?,
        Command::Counterexample(a) => cmd_counterexample(&a, out)?,
        Command::Recover(a) => cmd_recover(&a, out)?,
        Command::Mra(a) => cmd_mra(&a, out)?,
        Command::Cryoem(a) => cmd_cryoem(&a, out)?,
        Command::Run { config } => {
            let mut argv = config_to_argv(&config)?;
            argv.extend(["--out".to_string(), cli.out.display().to_string()]);
            if let Some(n) = cli.workers {
                argv.extend(["--workers".to_string(), n.to_string()]);
            }
            let inner = Cli::try_parse_from(argv)?;
            if matches!(inner.command, Command::Run { .. }) {
                bail!("nested run configs are not allowed");
            }
            return dispatch(Cli { workers: None, ..inner });
        }
    };
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let help = matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            let _ = e.print();
            return if help { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
