//! Command-line front end: single questions, benchmark batches, the
//! retrieval baseline, significance tests and report rendering.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lectern::ConfidenceLevel;

pub use error::{CliError, FailureKind};

pub const DEFAULT_CONFIG: &str = "lectern.toml";
pub const DEFAULT_TRACE_DIR: &str = "traces";

#[derive(Debug, Parser)]
#[command(
    name = "lectern",
    version,
    about = "Answer research questions by reading papers section by section"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Backend registry file.
    #[arg(long, global = true, default_value = DEFAULT_CONFIG)]
    pub config: PathBuf,
    /// Backend that reads the paper (defaults to `[defaults] backbone`).
    #[arg(long, global = true)]
    pub backbone: Option<String>,
    /// Backend that maps answers to choices (defaults to `[defaults] mapper`).
    #[arg(long, global = true)]
    pub mapper: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = Confidence::Balanced)]
    pub confidence: Confidence,
    /// Stop reading after this many sections.
    #[arg(long, global = true)]
    pub max_iterations: Option<usize>,
    #[arg(long, global = true, default_value = DEFAULT_TRACE_DIR)]
    pub trace_dir: PathBuf,
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: u64,
    /// Accepted for forward compatibility; decoding is greedy so it has no effect.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Confidence {
    Conservative,
    Balanced,
    Aggressive,
}

impl From<Confidence> for ConfidenceLevel {
    fn from(c: Confidence) -> Self {
        match c {
            Confidence::Conservative => ConfidenceLevel::Conservative,
            Confidence::Balanced => ConfidenceLevel::Balanced,
            Confidence::Aggressive => ConfidenceLevel::Aggressive,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer one question about one paper.
    Ask {
        paper: PathBuf,
        question: String,
        /// Read only the top-ranked section and answer without the evidence check.
        #[arg(long)]
        no_sufficiency_check: bool,
        /// Print the answer as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run a benchmark file and write per-item results.
    Bench {
        dataset: PathBuf,
        /// Directory holding `<paper_id>.md` (or `.pdf`) files.
        #[arg(long, required_unless_present = "remap_only")]
        papers: Option<PathBuf>,
        /// Results JSON to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write the score report (`.csv` or Markdown by extension).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Re-map stored answers from `--from` with `--mapper`; no pipelines run.
        #[arg(long, requires = "from")]
        remap_only: bool,
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Paired one-sided signed-rank tests of A against one or more Bs.
    Stats {
        /// Results JSON, or CSV with `key` and `accuracy` columns.
        a: PathBuf,
        #[arg(required = true)]
        b: Vec<PathBuf>,
    },
    /// Answer with the chunk-retrieval baseline.
    Rag {
        paper: PathBuf,
        question: String,
        #[arg(long, default_value_t = lectern::rag::DEFAULT_CHUNK_SIZE)]
        chunk_size: usize,
        #[arg(long, default_value_t = lectern::rag::DEFAULT_OVERLAP)]
        overlap: usize,
        #[arg(long, default_value_t = lectern::rag::DEFAULT_TOP_K)]
        top_k: usize,
        /// Backend used for embeddings (defaults to `[defaults] embed_backend`, then the backbone).
        #[arg(long)]
        embed_backend: Option<String>,
        /// Save the embedding index (plus a `.json` sidecar) here.
        #[arg(long)]
        index_out: Option<PathBuf>,
    },
    /// Score a results file and print it as CSV or Markdown.
    Report {
        results: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(seed) = cli.global.seed {
        tracing::debug!(seed, "seed accepted; decoding is greedy so it is unused");
    }
    let global = &cli.global;
    match cli.command {
        Command::Ask {
            paper,
            question,
            no_sufficiency_check,
            json,
        } => commands::ask(global, &paper, &question, !no_sufficiency_check, json),
        Command::Bench {
            dataset,
            papers,
            out,
            report,
            remap_only,
            from,
        } => {
            if remap_only {
                let from = from.expect("clap enforces --from");
                commands::remap(global, &dataset, &from, &out, report.as_deref())
            } else {
                let papers = papers.expect("clap enforces --papers");
                commands::bench(global, &dataset, &papers, &out, report.as_deref())
            }
        }
        Command::Stats { a, b } => commands::stats(&a, &b),
        Command::Rag {
            paper,
            question,
            chunk_size,
            overlap,
            top_k,
            embed_backend,
            index_out,
        } => {
            let config = lectern::rag::RagConfig {
                chunk_size,
                overlap,
                top_k,
            };
            commands::rag(
                global,
                &paper,
                &question,
                &config,
                embed_backend.as_deref(),
                index_out.as_deref(),
            )
        }
        Command::Report {
            results,
            dataset,
            format,
            out,
        } => commands::report(&results, &dataset, format, out.as_deref()),
    }
}
