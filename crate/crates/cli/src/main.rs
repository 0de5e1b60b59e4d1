//! `rewire`: train GNNs, explain them and attack them by edge rewiring.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod run;

use config::{parse_config_text, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "rewire", version, about = "Explanation-guided edge rewiring attacks on GNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a dataset and store it as a graph container.
    Ingest,
    /// Generate a stochastic block model graph.
    GenSbm,
    /// Train a model and report its clean misclassification rate.
    Train,
    /// Explain every node of a trained model and write the combined mask.
    Explain,
    /// Explain, plan, rewire and evaluate one attack.
    Attack,
    /// Run attacks over a list of ratios and seeds.
    Sweep,
    /// Summarise sweep results.
    Report {
        /// Sweep run directory or its `sweep.jsonl`.
        input: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory for this run instead of a timestamped one.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Log progress.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[arg(long, global = true)]
    seed: Option<String>,
    /// cora, citeseer, pubmed, sbm, plain:<dir> or container:<file>.
    #[arg(long, global = true)]
    dataset: Option<String>,
    #[arg(long, global = true)]
    data_dir: Option<String>,
    /// gcn, gat or sage.
    #[arg(long, global = true)]
    arch: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<String>,
    /// gnnexplainer or pgexplainer.
    #[arg(long, global = true)]
    explainer: Option<String>,
    #[arg(long, global = true)]
    top_k: Option<String>,
    #[arg(long, global = true)]
    gamma: Option<String>,
    #[arg(long, global = true)]
    edr: Option<String>,
    #[arg(long, global = true)]
    total: Option<String>,
    /// guided or random.
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Comma-separated ratios for a sweep.
    #[arg(long, global = true)]
    gammas: Option<String>,
    /// Comma-separated seeds for a sweep.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// edr:X, total:N or rate:X.
    #[arg(long, global = true)]
    budget: Option<String>,
    #[arg(long, global = true)]
    checkpoint: Option<String>,
    #[arg(long, global = true)]
    mask: Option<String>,
    #[arg(long, global = true)]
    out_dir: Option<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<String>,
}

impl Common {
    fn flag_pairs(&self) -> Result<Vec<(String, String)>, String> {
        let mut out = Vec::new();
        let named = [
            ("seed", &self.seed),
            ("dataset", &self.dataset),
            ("data_dir", &self.data_dir),
            ("arch", &self.arch),
            ("train.epochs", &self.epochs),
            ("explainer", &self.explainer),
            ("explainer.top_k", &self.top_k),
            ("attack.gamma", &self.gamma),
            ("attack.edr", &self.edr),
            ("attack.total", &self.total),
            ("attack.variant", &self.variant),
            ("sweep.gammas", &self.gammas),
            ("sweep.seeds", &self.seeds),
            ("sweep.budget", &self.budget),
            ("checkpoint", &self.checkpoint),
            ("mask", &self.mask),
            ("out_dir", &self.out_dir),
            ("jobs", &self.jobs),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                out.push((k.to_string(), v.clone()));
            }
        }
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| format!("--set expects KEY=VALUE, got {s:?}"))?;
            let k = k.trim();
            if !config::KEYS.contains(&k) {
                return Err(format!("unknown config key {k:?}"));
            }
            out.push((k.to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    fn resolve(&self) -> Result<RunConfig, String> {
        let file = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| format!("{}: {e}", p.display()))?;
                parse_config_text(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => Vec::new(),
        };
        RunConfig::from_layers([file.as_slice(), self.flag_pairs()?.as_slice()])
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.common.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();

    let cfg = match cli.common.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Report { input } => commands::report(input, &cfg, cli.common.run_dir.as_deref()),
        other => {
            let name = match other {
                Command::Ingest => "ingest",
                Command::GenSbm => "gen-sbm",
                Command::Train => "train",
                Command::Explain => "explain",
                Command::Attack => "attack",
                Command::Sweep => "sweep",
                Command::Report { .. } => unreachable!(),
            };
            commands::run(name, &cfg, cli.common.run_dir.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
