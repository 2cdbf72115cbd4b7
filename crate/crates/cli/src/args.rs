use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sonmf_core::{FitConfig, Init, Method, Weighting};

#[derive(Debug, Parser)]
#[command(name = "sonmf-kit", version, about = "Semi-orthogonal NMF and baselines: fit, simulate, mine text")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factorize one matrix file (CSV or Matrix Market).
    Factorize(FactorizeArgs),
    /// Run a seeded simulation study described by a TOML config.
    Simulate(SimulateArgs),
    /// Build a bag of words from a corpus, factorize it and export topics and features.
    Textpipe(TextpipeArgs),
}

/// Fit settings shared by every command. Unset values fall back to the
/// command's defaults.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Stop once the per-entry objective decrease falls below this.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Initial Cayley step.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Newton step for G in binary SONMF.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Gradient step for logistic NMF.
    #[arg(long)]
    pub lognmf_step: Option<f64>,
    #[arg(long)]
    pub init: Option<Init>,
    #[arg(long, env = "SONMF_KIT_SEED")]
    pub seed: Option<u64>,
}

impl FitArgs {
    pub fn resolve(&self, mut cfg: FitConfig) -> FitConfig {
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if self.tau.is_some() {
            cfg.tau = self.tau;
        }
        if let Some(v) = self.eta {
            cfg.eta = v;
        }
        if let Some(v) = self.lognmf_step {
            cfg.lognmf_step = v;
        }
        if let Some(v) = self.init {
            cfg.init = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Args)]
pub struct FactorizeArgs {
    /// Input matrix; `.mtx`/`.mm` is read as Matrix Market, anything else as CSV.
    pub input: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, default_value = "sonmf-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Study config (TOML).
    pub config: PathBuf,
    /// Trials run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Override the number of trials in the config.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Override the base seed of the scenario.
    #[arg(long, env = "SONMF_KIT_SEED")]
    pub seed: Option<u64>,
    #[arg(long, default_value = "sonmf-sim")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TextpipeArgs {
    /// One document per line, or `label,text` CSV records for `.csv` files.
    pub corpus: PathBuf,
    #[arg(long, default_value = "tfidf")]
    pub weighting: Weighting,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Drop terms seen in fewer documents than this.
    #[arg(long, default_value_t = 1)]
    pub min_doc_freq: usize,
    /// Fraction of documents held out and projected onto the training basis.
    #[arg(long, default_value_t = 0.0)]
    pub test_split: f64,
    /// Terms listed per sign in each topic.
    #[arg(long, default_value_t = 5)]
    pub top_terms: usize,
    #[arg(long, default_value = "sonmf-text")]
    pub out: PathBuf,
}
