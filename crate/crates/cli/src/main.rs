//! `rep`: train, propagate, evaluate and sweep knowledge graph embeddings.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "rep", version, about = "Relation-aware embedding propagation for knowledge graph embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train embeddings with margin loss and SGD; writes checkpoints, a line-JSON log and vocabularies.
    Train(Common),
    /// Apply entity adaptation hops to a checkpoint and write a new checkpoint.
    Propagate(PropagateArgs),
    /// Rank a split with a checkpoint and write a JSON report.
    Evaluate(Common),
    /// Evaluate an alpha × hops grid into a resumable CSV.
    Sweep(Common),
    /// Run the built-in property checks; exits nonzero if any fails.
    Verify(VerifyArgs),
}

/// Options shared by the data-driven commands. Flags override the config file.
#[derive(Args, Debug, Default)]
pub struct Common {
    /// Flat key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory with train.txt, valid.txt, test.txt.
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long, value_parser = ["transe", "distmult", "rotate", "ote"])]
    pub model: Option<String>,
    #[arg(long)]
    pub dim: Option<String>,
    /// Margin of the ranking loss.
    #[arg(long)]
    pub gamma: Option<String>,
    /// Distance norm order for the distance-based families (1 or 2).
    #[arg(long, value_parser = ["1", "2"])]
    pub norm: Option<String>,
    /// Number of OTE groups.
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub negatives: Option<String>,
    /// Comma-separated fractions of the total step count at which to write checkpoints.
    #[arg(long)]
    pub checkpoint_fractions: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub hops: Option<String>,
    #[arg(long, value_parser = ["rep", "ep"])]
    pub mode: Option<String>,
    #[arg(long, value_parser = ["filtered", "candidates"])]
    pub protocol: Option<String>,
    /// Candidate file for the candidates protocol: one line of entity labels per test triplet.
    #[arg(long, alias = "candidates")]
    pub candidate_file: Option<String>,
    #[arg(long, value_parser = ["average", "optimistic", "pessimistic"])]
    pub tie: Option<String>,
    /// Split to evaluate: train, valid or test.
    #[arg(long)]
    pub split: Option<String>,
    /// Comma-separated alpha values for sweeps.
    #[arg(long)]
    pub alphas: Option<String>,
    /// Sweeps cover hops 1..=max_hops.
    #[arg(long)]
    pub max_hops: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Worker threads; 0 uses all cores, 1 is bit-reproducible.
    #[arg(long)]
    pub threads: Option<String>,
    /// Input checkpoint.
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Output directory (train), file (propagate, evaluate, sweep).
    #[arg(long)]
    pub out: Option<String>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug)]
pub struct PropagateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Evaluate on the configured split after every hop and print the reports.
    #[arg(long)]
    pub per_hop: bool,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Property to run (repeatable); all when omitted.
    #[arg(long = "property")]
    pub properties: Vec<String>,
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Samples per family for the inversion check.
    #[arg(long, default_value_t = 10_000)]
    pub inversion_samples: usize,
    /// Points per case for the gradient check.
    #[arg(long, default_value_t = 1_000)]
    pub gradient_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Also write the results as a JSON array to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(c) => commands::train(&c),
        Command::Propagate(p) => commands::propagate(&p.common, p.per_hop),
        Command::Evaluate(c) => commands::evaluate(&c),
        Command::Sweep(c) => commands::sweep(&c),
        Command::Verify(v) => commands::verify(&v),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
