use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "endofinder", version, about = "Polyp re-identification and classification by hashed retrieval")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Pipeline config (JSON). Flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for all randomness in the run (overrides every seed in the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Also write the report as JSON to this file.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Print JSON instead of a text table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic polyp dataset.
    SynthGen {
        /// Output directory (created if missing).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        instances: Option<usize>,
        /// Write two augmented views of every instance instead of the originals.
        #[arg(long)]
        views: bool,
    },
    /// Train the encoder on a dataset directory.
    Train {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Parameter file to write (.endp).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Write the per-epoch training log as JSON.
        #[arg(long, value_name = "FILE")]
        log: Option<PathBuf>,
    },
    /// Embed every image of a dataset (.endf output).
    Embed {
        #[arg(long, value_name = "FILE")]
        params: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Sign-quantize embeddings into hash codes (JSON with hex codes).
    Hash {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Build a ball-tree index over the hashed embeddings (.endx output).
    IndexBuild {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Classify every embedding of a file against an index; prints evidence reports.
    IndexQuery {
        #[arg(long, value_name = "FILE")]
        index: PathBuf,
        /// Query embeddings (.endf).
        #[arg(long, value_name = "FILE")]
        query: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        /// Output file; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Re-identification report over view embeddings (ids of the form `instance#view`).
    EvalReid {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// K-fold retrieval classification report.
    EvalClassify {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Time hashed ball-tree queries against a raw cosine scan.
    Bench {
        #[arg(long)]
        corpus_size: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Serve queries against an index over HTTP.
    Serve {
        #[arg(long, value_name = "FILE")]
        index: PathBuf,
        /// Encoder parameters; checked against the index code length.
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        /// Neighbors per query when a request does not say.
        #[arg(long)]
        k: Option<usize>,
    },
}
