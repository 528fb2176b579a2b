//! `myopia`: operator command line for the patient-education agent.

mod commands;
mod eval_cmd;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use output::Format;

#[derive(Debug, Parser)]
#[command(name = "myopia", version, about = "Knowledge ingestion, retrieval, fundus grading, data splitting, evaluation and the chat service")]
pub struct Cli {
    /// Output format for results
    #[arg(long, global = true, value_enum, default_value = "table")]
    pub format: Format,
    /// Decimal places for numeric output
    #[arg(long, global = true, default_value_t = 4)]
    pub decimals: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chunk and embed a corpus directory into an index file
    Ingest(IngestArgs),
    /// Retrieve the top-k chunks of an index for a question
    Query(QueryArgs),
    /// Grade fundus images, or score a sidecar's predictions against its labels
    Classify(ClassifyArgs),
    /// Assign participants to train/val/test splits without leakage
    Split(SplitArgs),
    /// Run an evaluation over fixture files
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run the HTTP service
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct EmbeddingArgs {
    /// Remote embedding endpoint; the built-in hash embedder is used when absent
    #[arg(long, requires_all = ["embedding_model", "embedding_dim"])]
    pub embedding_endpoint: Option<String>,
    /// Model name sent to the embedding endpoint
    #[arg(long)]
    pub embedding_model: Option<String>,
    /// Vector dimension the embedding endpoint returns
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    /// Environment variable holding the embedding endpoint's bearer token
    #[arg(long)]
    pub api_key_env: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of front-matter documents (searched recursively)
    #[arg(long)]
    pub corpus: PathBuf,
    /// Index file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Language of the corpus: en or zh
    #[arg(long)]
    pub language: String,
    /// Maximum tokens per chunk
    #[arg(long, default_value_t = 250)]
    pub chunk_size: usize,
    /// Tokens shared by consecutive chunks
    #[arg(long, default_value_t = 0)]
    pub overlap: usize,
    #[command(flatten)]
    pub embedding: EmbeddingArgs,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Index file written by `ingest`
    #[arg(long)]
    pub index: PathBuf,
    /// Number of chunks to return
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Query language; read from the index when absent
    #[arg(long)]
    pub language: Option<String>,
    #[command(flatten)]
    pub embedding: EmbeddingArgs,
    /// The question to search for
    pub question: String,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Sidecar CSV: image_ref,participant_id,label,p0..p4
    #[arg(long, conflicts_with = "endpoint")]
    pub sidecar: Option<PathBuf>,
    /// Remote grading endpoint
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Environment variable holding the grading endpoint's bearer token
    #[arg(long, requires = "endpoint")]
    pub api_key_env: Option<String>,
    /// Score every sidecar row against its label instead of grading images
    #[arg(long, requires = "sidecar", conflicts_with = "images")]
    pub metrics: bool,
    /// Image files to grade
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Labels CSV: image_ref,participant_id,label
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.8)]
    pub train: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val: f64,
    #[arg(long, default_value_t = 0.1)]
    pub test: f64,
    /// Print per-class image fractions instead of the assignment
    #[arg(long)]
    pub summary: bool,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Score the single-choice exams and compare respondent groups
    Scq {
        /// Items CSV: exam_id,item_id,kind,answer
        #[arg(long)]
        items: PathBuf,
        /// Responses CSV: respondent_id,group,item_id,choice
        #[arg(long)]
        responses: PathBuf,
    },
    /// Adjudicate expert ratings and compare answer sources
    Ratings {
        /// Ratings CSV: question_id,source,criterion,rater_id,rating
        #[arg(long)]
        ratings: PathBuf,
    },
    /// Compare trial arms on the questionnaires
    Rct {
        /// Questionnaire CSV: participant_id,arm,instrument,item_index,value
        #[arg(long)]
        questionnaires: PathBuf,
        /// Satisfaction subscale map, e.g. "cognitive=1-5;affective=6-10"
        #[arg(long)]
        cmissr_map: Option<String>,
        /// Decisional conflict subscale map; only the total when absent
        #[arg(long)]
        dcs_map: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service configuration file (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Listen address, overriding the configuration
    #[arg(long)]
    pub listen: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or inputs: exit 1.
    #[error("{0}")]
    Invalid(String),
    /// Failures while doing valid work (I/O, providers, the network): exit 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_target(false).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
