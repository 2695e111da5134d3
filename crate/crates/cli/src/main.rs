//! `telemb`: command-line driver for corpus preparation, tokenizer
//! extension, triplet fine-tuning, evaluation and retrieval.
//!
//! Exit codes: 0 on success, 1 on a domain error (the error kind is printed,
//! e.g. `IoError`), 2 on a usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "telemb", about = "Domain-adapted text embeddings for telecom documentation")]
#[command(disable_version_flag = true, arg_required_else_help = true)]
pub struct Cli {
    /// Print the tool version and every on-disk format version.
    #[arg(long, global = true)]
    version: bool,

    #[command(flatten)]
    global: GlobalOpts,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Directory every artifact is read from and written to.
    #[arg(long, global = true, default_value = "work")]
    pub work_dir: PathBuf,

    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override one configuration key (repeatable), e.g. `--set epochs=20`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Global seed; every module derives its own seed from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Clean, chunk, filter and deduplicate a directory of documents.
    Ingest {
        /// Directory of plain-text documents (optional `<name>.meta` sidecars).
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Build or import training and benchmark data.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Train or extend the byte-level BPE tokenizer.
    #[command(subcommand)]
    Tok(TokCmd),
    /// Fine-tune the encoder with the triplet objective.
    Train {
        /// Triplet JSONL (defaults to `<work-dir>/triplets.jsonl`).
        #[arg(long)]
        triplets: Option<PathBuf>,
        /// Start from this checkpoint instead of a fresh initialisation.
        #[arg(long)]
        base: Option<PathBuf>,
    },
    /// Evaluate a checkpoint.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Similarity distributions, projections and weight deltas.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Build or query the dense/sparse retrieval index.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Run the synthetic end-to-end experiment and print the comparison table.
    Repro,
}

#[derive(Subcommand, Debug)]
pub enum DatasetCmd {
    /// Validate a triplet JSONL file and copy it into the work dir.
    Import {
        #[arg(long)]
        input: PathBuf,
        /// Source field names, e.g. `anchor=query,positive=pos,negative=neg`.
        #[arg(long, value_name = "FIELD=SOURCE,...")]
        field_map: Option<String>,
    },
    /// Token statistics of the imported triplets (needs a tokenizer).
    Stats,
    /// Generate query/passage pairs with hard negatives from the chunks.
    Benchmark {
        #[arg(long)]
        negatives_per_query: Option<usize>,
        #[arg(long, value_enum)]
        querygen: Option<QueryGenKind>,
        #[arg(long)]
        llm_endpoint: Option<String>,
    },
    /// Write the synthetic ambiguous-vocabulary corpus and triplets.
    Synth {
        #[arg(long, default_value_t = 2000)]
        n_train: usize,
        #[arg(long, default_value_t = 500)]
        n_test: usize,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryGenKind {
    Stub,
    Llm,
}

#[derive(Subcommand, Debug)]
pub enum TokCmd {
    /// Train BPE merges on the ingested chunks.
    Train {
        #[arg(long)]
        vocab_size: Option<usize>,
    },
    /// Append whole-word domain terms (one per line) to the vocabulary.
    Extend {
        #[arg(long)]
        terms_file: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum EvalCmd {
    /// Triplet accuracy on a held-out file.
    Triplets {
        #[arg(long)]
        triplets: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Full-corpus retrieval metrics over the benchmark pairs.
    Retrieval {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Spearman correlation (x100) on sentence pairs with gold scores.
    Sts {
        /// JSONL with `sentence1`, `sentence2`, `score`.
        #[arg(long)]
        pairs_file: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum AnalyzeCmd {
    /// Histogram of cos(a,p) and cos(a,n).
    Dist {
        #[arg(long)]
        triplets: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// 2-D projection of anchor/positive/negative embeddings.
    Project {
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        triplets: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Per-tensor L2 change between two checkpoints.
    Deltas {
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long)]
        fine: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodArg {
    Tsne,
    Pca,
}

#[derive(Subcommand, Debug)]
pub enum IndexCmd {
    /// Embed every chunk and build both indexes.
    Build {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Rank chunks for a query.
    Query {
        query: String,
        #[arg(long, value_enum, default_value = "hybrid")]
        mode: ModeArg,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArg {
    Dense,
    Sparse,
    Hybrid,
}

fn print_version() {
    println!("telemb {}", env!("CARGO_PKG_VERSION"));
    for (name, v) in telemb_core::FORMAT_VERSIONS {
        println!("{name} format v{v}");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if cli.version {
        print_version();
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return ExitCode::from(2);
    };
    match commands::run(&cli.global, command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::CliError::Domain(e)) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(1)
        }
    }
}
