//! Command-line front end: every pipeline is a subcommand with deterministic,
//! machine-readable outputs. Each run writes its reports plus a manifest
//! (resolved configuration, input digests, seed); `replay` re-executes a
//! manifest and reproduces every artifact byte for byte, at any thread count.

mod commands;
mod emit;
mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use manifest::RunManifest;

/// Process exit codes: 0 success, 1 usage error, 2 data error.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Data(err) => write!(f, "{err:#}"),
        }
    }
}

impl From<kdlab_core::Error> for CliError {
    fn from(e: kdlab_core::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

pub type CliResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "kdlab",
    version,
    about = "Parallel-corpus distillation metrics and an HMM distillation laboratory",
    propagate_version = true
)]
pub struct Cli {
    /// Master seed; all randomness derives from it through named sub-streams.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Worker thread count (defaults to all cores). Outputs are identical at
    /// any thread count.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory for reports and the run manifest (created if missing).
    #[arg(long, global = true, default_value = "kdlab-out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
pub enum Command {
    /// Train the diagonal-prior aligner; emit Pharaoh links, model JSON, and
    /// the per-iteration likelihood trace.
    Align(AlignCmd),
    /// Corpus complexity: mean conditional entropy of aligned target words.
    Complexity(ComplexityCmd),
    /// Faithfulness: mean KL divergence of lexical distributions against a
    /// reference corpus.
    Faithfulness(FaithfulnessCmd),
    /// Fuzzy reordering scores per sentence.
    Reorder(ReorderCmd),
    /// Per-sentence conditional entropy with histogram, SVG, and gnuplot table.
    #[command(name = "entropy-hist")]
    EntropyHist(EntropyHistCmd),
    /// Token-level Bayes language posteriors, purity, and a ternary plot.
    Langid(LangidCmd),
    /// Generate a random HMM teacher.
    #[command(name = "hmm-gen")]
    HmmGen(HmmGenCmd),
    /// Sample a labeled dataset from an HMM.
    #[command(name = "hmm-sample")]
    HmmSample(HmmSampleCmd),
    /// Replace a dataset's labels with a decoding of its observations.
    #[command(name = "hmm-distill")]
    HmmDistill(HmmDistillCmd),
    /// Born-again loop: refit a teacher on its own distillation, repeatedly.
    #[command(name = "hmm-reborn")]
    HmmReborn(HmmRebornCmd),
    /// Multi-seed win-rate experiment over real/seq/tok training sets.
    #[command(name = "hmm-experiment")]
    HmmExperiment(HmmExperimentCmd),
    /// Complexity/faithfulness/reordering table of a real corpus vs. altered
    /// corpora, as CSV, JSON, and SVG panels.
    Compare(CompareCmd),
    /// Re-execute a recorded run manifest.
    Replay(ReplayCmd),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Align(_) => "align",
            Command::Complexity(_) => "complexity",
            Command::Faithfulness(_) => "faithfulness",
            Command::Reorder(_) => "reorder",
            Command::EntropyHist(_) => "entropy-hist",
            Command::Langid(_) => "langid",
            Command::HmmGen(_) => "hmm-gen",
            Command::HmmSample(_) => "hmm-sample",
            Command::HmmDistill(_) => "hmm-distill",
            Command::HmmReborn(_) => "hmm-reborn",
            Command::HmmExperiment(_) => "hmm-experiment",
            Command::Compare(_) => "compare",
            Command::Replay(_) => "replay",
        }
    }
}

/// Corpus input: either one pipe-delimited file or a line-aligned file pair.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorpusInput {
    /// Pipe-delimited corpus ("src ||| tgt" per line).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Source side of a two-file corpus (requires --tgt).
    #[arg(long, requires = "tgt")]
    pub src: Option<PathBuf>,
    /// Target side of a two-file corpus (requires --src).
    #[arg(long, requires = "src")]
    pub tgt: Option<PathBuf>,
    /// Drop pairs with either side longer than this.
    #[arg(long, default_value_t = 250)]
    pub max_len: usize,
    /// Lowercase tokens while loading.
    #[arg(long, default_value_t = false)]
    pub lowercase: bool,
}

/// EM settings used whenever a subcommand trains an aligner itself.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EmArgs {
    #[arg(long, default_value_t = 5)]
    pub em_iters: usize,
    #[arg(long, default_value_t = 4.0)]
    pub tension: f64,
    #[arg(long, default_value_t = 0.08)]
    pub null_prob: f64,
    #[arg(long, default_value_t = false)]
    pub update_tension: bool,
    #[arg(long, default_value_t = 0.01)]
    pub add_alpha: f64,
}

/// Where word alignments come from: a Pharaoh file, identity links, a saved
/// model, or (default) an aligner trained on the corpus itself.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AlignSource {
    /// Pharaoh alignment file matching the corpus line for line.
    #[arg(long)]
    pub align: Option<PathBuf>,
    /// Use identity links (requires equal-length pairs).
    #[arg(long, default_value_t = false)]
    pub identity: bool,
    /// Load a saved alignment model instead of training one.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Accumulate soft posterior link counts instead of hard Viterbi links
    /// (only with a model, loaded or trained).
    #[arg(long, default_value_t = false)]
    pub posterior: bool,
    #[command(flatten)]
    pub em: EmArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AlignCmd {
    #[command(flatten)]
    pub input: CorpusInput,
    #[command(flatten)]
    pub em: EmArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MetricOpts {
    /// Source words with fewer counts are left out of the average.
    #[arg(long, default_value_t = 1.0)]
    pub min_count: f64,
    /// Include the NULL pseudo-word in the averages.
    #[arg(long, default_value_t = false)]
    pub include_null: bool,
    /// Report in bits instead of nats.
    #[arg(long, default_value_t = false)]
    pub log2: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ComplexityCmd {
    #[command(flatten)]
    pub input: CorpusInput,
    #[command(flatten)]
    pub source: AlignSource,
    #[command(flatten)]
    pub opts: MetricOpts,
    /// Histogram bins for the per-sentence entropies.
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FaithfulnessCmd {
    /// Reference (real) corpus, pipe-delimited.
    #[arg(long)]
    pub real: PathBuf,
    /// Altered corpus, pipe-delimited.
    #[arg(long)]
    pub alt: PathBuf,
    /// Pharaoh alignments for the real corpus.
    #[arg(long)]
    pub real_align: Option<PathBuf>,
    /// Pharaoh alignments for the altered corpus.
    #[arg(long)]
    pub alt_align: Option<PathBuf>,
    /// Identity links for both corpora.
    #[arg(long, default_value_t = false)]
    pub identity: bool,
    #[command(flatten)]
    pub em: EmArgs,
    /// Additive smoothing over union supports.
    #[arg(long, default_value_t = 1e-3)]
    pub alpha: f64,
    #[arg(long, default_value_t = false)]
    pub include_null: bool,
    #[arg(long, default_value_t = false)]
    pub log2: bool,
    #[arg(long, default_value_t = 250)]
    pub max_len: usize,
    #[arg(long, default_value_t = false)]
    pub lowercase: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReorderCmd {
    #[command(flatten)]
    pub input: CorpusInput,
    #[command(flatten)]
    pub source: AlignSource,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EntropyHistCmd {
    #[command(flatten)]
    pub input: CorpusInput,
    #[command(flatten)]
    pub source: AlignSource,
    #[command(flatten)]
    pub opts: MetricOpts,
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
    /// Histogram range as "lo:hi" (default: 0 to the maximum value).
    #[arg(long)]
    pub range: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LangidCmd {
    /// Labeled monolingual corpus as label=path; repeat per language.
    #[arg(long = "lang", value_name = "LABEL=PATH")]
    pub langs: Vec<String>,
    /// Sentences to score, one per line.
    #[arg(long)]
    pub score: PathBuf,
    /// Profile smoothing.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct HmmGenCmd {
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub v: usize,
    /// Initial/transition weights are uniform in (0, a].
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Emission weights are uniform in (0, b].
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct HmmSampleCmd {
    /// HMM JSON produced by hmm-gen.
    #[arg(long)]
    pub hmm: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub tmin: usize,
    #[arg(long, default_value_t = 10)]
    pub tmax: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct HmmDistillCmd {
    #[arg(long)]
    pub hmm: PathBuf,
    /// Dataset file ("x0 x1 ... ||| y0 y1 ..." per line).
    #[arg(long)]
    pub data: PathBuf,
    /// viterbi | tok | greedy | beam:W | sample | topk:K | interpolate:K
    #[arg(long, default_value = "viterbi")]
    pub strategy: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct HmmRebornCmd {
    #[arg(long)]
    pub hmm: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub iters: usize,
    /// viterbi | tok | greedy | beam:W | sample | topk:K
    #[arg(long, default_value = "viterbi")]
    pub strategy: String,
    #[arg(long, default_value_t = 1e-3)]
    pub refit_alpha: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct HmmExperimentCmd {
    /// TOML or JSON experiment configuration; defaults are used when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CompareCmd {
    /// Reference (real) corpus, pipe-delimited.
    #[arg(long)]
    pub real: PathBuf,
    /// Altered corpora to compare against the reference; repeatable.
    #[arg(long = "alt", required = true)]
    pub alts: Vec<PathBuf>,
    /// Identity links for every corpus (skips aligner training).
    #[arg(long, default_value_t = false)]
    pub identity: bool,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub alpha: f64,
    #[arg(long, default_value_t = 250)]
    pub max_len: usize,
    #[arg(long, default_value_t = false)]
    pub lowercase: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayCmd {
    /// Manifest file written by a previous run.
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Runs a parsed invocation, honoring the thread-count flag.
pub fn run(cli: &Cli) -> CliResult {
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Data(e.into()))?;
            pool.install(|| dispatch(&cli.command, cli.seed, &cli.out))
        }
        None => dispatch(&cli.command, cli.seed, &cli.out),
    }
}

fn dispatch(command: &Command, seed: u64, out: &Path) -> CliResult {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Data(anyhow::anyhow!("cannot create {}: {e}", out.display())))?;
    match command {
        Command::Align(cmd) => commands::metrics::align(cmd, seed, out),
        Command::Complexity(cmd) => commands::metrics::complexity(cmd, seed, out),
        Command::Faithfulness(cmd) => commands::metrics::faithfulness(cmd, seed, out),
        Command::Reorder(cmd) => commands::metrics::reorder(cmd, seed, out),
        Command::EntropyHist(cmd) => commands::metrics::entropy_hist(cmd, seed, out),
        Command::Langid(cmd) => commands::langid::langid(cmd, seed, out),
        Command::HmmGen(cmd) => commands::hmm::gen(cmd, seed, out),
        Command::HmmSample(cmd) => commands::hmm::sample(cmd, seed, out),
        Command::HmmDistill(cmd) => commands::hmm::distill(cmd, seed, out),
        Command::HmmReborn(cmd) => commands::hmm::reborn(cmd, seed, out),
        Command::HmmExperiment(cmd) => commands::hmm::experiment(cmd, seed, out),
        Command::Compare(cmd) => commands::metrics::compare(cmd, seed, out),
        Command::Replay(cmd) => replay(cmd, out),
    }
}

fn replay(cmd: &ReplayCmd, out: &Path) -> CliResult {
    let manifest = RunManifest::load(&cmd.manifest)?;
    let command: Command = serde_json::from_value(manifest.command.clone())
        .map_err(|e| CliError::Data(anyhow::anyhow!("manifest command does not parse: {e}")))?;
    if matches!(command, Command::Replay(_)) {
        return Err(usage("refusing to replay a replay"));
    }
    dispatch(&command, manifest.seed, out)
}
