//! The `tiered` command line.
//!
//! Exit codes: 0 success, 1 partial parse failure (every parseable molecule
//! is still processed), 2 I/O or invalid arguments, 3 numeric abort during
//! training, 4 checkpoint that does not match its own config or the input.

mod commands;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::models::{ModelKind, TrainConfig};
use crate::numerics::OptimizerKind;

pub use commands::run;

#[derive(Debug, Parser)]
#[command(name = "tiered", version, about = "Tiered latent representations for molecular graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-molecule atom, bond, ring and element counts.
    Parse {
        #[arg(long)]
        input: PathBuf,
        /// JSON report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Groups and the atom→group membership matrix of every molecule.
    Partition {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a tiered autoencoder; writes a checkpoint to `--out` and the
    /// loss trace next to it with a `.csv` extension.
    Train(TrainArgs),
    /// Embeddings of one tier from a trained checkpoint.
    Embed {
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Tier::Graph)]
        tier: Tier,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linear path between the graph embeddings of two molecules, with
    /// decoded edge-probability summaries at every step.
    Interp {
        checkpoint: PathBuf,
        smiles_a: String,
        smiles_b: String,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Gae)]
    pub model: ModelKind,
    /// Atom, group and graph embedding widths.
    #[arg(long, value_parser = parse_dims, default_value = "16,16,16")]
    pub dims: [usize; 3],
    /// GCN layers per tier.
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = OptimizerKind::Adam)]
    pub optimizer: OptimizerKind,
    /// KL weight (VGAE only).
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Weight of the feature reconstruction term.
    #[arg(long = "lambda-x", default_value_t = 0.1)]
    pub lambda_x: f64,
}

impl TrainArgs {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            seed: self.seed,
            optimizer: self.optimizer,
            beta: self.beta,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Tier {
    Node,
    Group,
    Graph,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Node => "node",
            Tier::Group => "group",
            Tier::Graph => "graph",
        }
    }
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b, c] = parts[..] else {
        return Err(format!("expected three comma-separated widths, got `{s}`"));
    };
    let one = |p: &str| match p.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("`{p}` is not a positive width")),
        Ok(v) => Ok(v),
    };
    Ok([one(a)?, one(b)?, one(c)?])
}

/// Where `train` writes the loss trace for a given checkpoint path.
pub fn trace_path(checkpoint: &Path) -> PathBuf {
    let p = checkpoint.with_extension("csv");
    if p == checkpoint {
        let mut s = p.into_os_string();
        s.push(".csv");
        PathBuf::from(s)
    } else {
        p
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Checkpoint(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 1,
            CliError::Io { .. } | CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Checkpoint(_) => 4,
        }
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    /// Some input lines failed to parse and were skipped.
    pub partial: bool,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        i32::from(self.partial)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_parser() {
        assert_eq!(parse_dims("4,8,2"), Ok([4, 8, 2]));
        assert_eq!(parse_dims(" 1, 2 ,3"), Ok([1, 2, 3]));
        assert!(parse_dims("4,8").is_err());
        assert!(parse_dims("4,0,2").is_err());
        assert!(parse_dims("a,b,c").is_err());
    }

    #[test]
    fn trace_next_to_checkpoint() {
        assert_eq!(trace_path(Path::new("run/model.json")), Path::new("run/model.csv"));
        assert_eq!(trace_path(Path::new("model")), Path::new("model.csv"));
        assert_eq!(trace_path(Path::new("m.csv")), Path::new("m.csv.csv"));
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "tiered", "train", "--input", "a.smi", "--out", "m.json", "--model", "vgae", "--dims", "2,3,4",
            "--layers", "2", "--lr", "0.1", "--epochs", "7", "--seed", "9", "--optimizer", "sgd", "--beta",
            "0.5", "--lambda-x", "0",
        ])
        .unwrap();
        let Command::Train(t) = cli.command else { panic!() };
        assert_eq!((t.model, t.dims, t.layers, t.epochs, t.seed), (ModelKind::Vgae, [2, 3, 4], 2, 7, 9));
        assert_eq!((t.optimizer, t.beta, t.lambda_x, t.lr), (OptimizerKind::Sgd, 0.5, 0.0, 0.1));
        let cli = Cli::try_parse_from(["tiered", "embed", "m.json", "--input", "a.smi", "--tier", "node"]).unwrap();
        assert!(matches!(cli.command, Command::Embed { tier: Tier::Node, out: None, .. }));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Outcome { partial: false }.exit_code(), 0);
        assert_eq!(Outcome { partial: true }.exit_code(), 1);
        assert_eq!(CliError::Numeric(String::new()).exit_code(), 3);
        assert_eq!(CliError::Checkpoint(String::new()).exit_code(), 4);
    }
}
