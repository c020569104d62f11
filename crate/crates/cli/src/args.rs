use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pstate::importance::{AnalysisKind, Grouping, Scope};
use pstate::svm::SolverKind;
use pstate::DecisionId;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "pstate", version, about = "Patient-state features, univariate AUC ranking and top-k linear SVM evaluation")]
pub struct Cli {
    /// Worker threads, 0 for all cores (outputs do not depend on it)
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort with planted ordering rules
    Synth(SynthArgs),
    /// Parse and validate an event file
    Validate(ValidateArgs),
    /// Cut records into 08:00 patient-state instances with next-24h labels
    Segment(SegmentArgs),
    /// Build the instance x feature matrix
    Featurize(FeaturizeArgs),
    /// Rank features by univariate AUC for each decision
    Rank(RankArgs),
    /// Count best features per clinical or temporal category
    Histogram(HistogramArgs),
    /// Train top-k linear SVMs on a patient split
    Train(TrainArgs),
    /// Test AUC of trained models
    Evaluate(EvaluateArgs),
    /// Summarize stage outputs into report.json
    Report(ReportArgs),
    /// Run every stage end to end
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Tsv,
    Json,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Tsv => "tsv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rows {
    /// Training patients of the split only
    Train,
    /// Every instance
    All,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// JSON synthesis config (defaults apply when omitted)
    #[arg(long)]
    #[serde(skip)]
    pub synth_config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of patients
    #[arg(long)]
    pub patients: Option<usize>,
    /// Overrides the rule noise level
    #[arg(long)]
    pub noise: Option<f64>,
    /// Output directory
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    /// Event file
    #[arg(long, default_value = "events.tsv")]
    #[serde(skip)]
    pub events: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SegmentArgs {
    /// Event file
    #[arg(long, default_value = "events.tsv")]
    #[serde(skip)]
    pub events: PathBuf,
    /// Output directory
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FeaturizeArgs {
    /// Event file
    #[arg(long, default_value = "events.tsv")]
    #[serde(skip)]
    pub events: PathBuf,
    /// Instance file
    #[arg(long, default_value = "instances.tsv")]
    #[serde(skip)]
    pub instances: PathBuf,
    /// Output directory
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitArgs {
    /// Number of training patients
    #[arg(long, conflicts_with = "train_fraction")]
    pub train_count: Option<usize>,
    /// Fraction of patients used for training
    #[arg(long, default_value_t = 0.65)]
    pub train_fraction: f64,
    /// Seed for the patient split
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RankArgs {
    /// Directory holding instances.tsv, matrix.tsv and matrix.meta.json
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub input: PathBuf,
    /// Decision family
    #[arg(long, default_value_t = AnalysisKind::LabOrder)]
    pub kind: AnalysisKind,
    /// Feature scope
    #[arg(long, default_value_t = Scope::AllFeatures)]
    pub scope: Scope,
    /// Restrict to these decisions, e.g. lab_order:LAB001 (repeatable)
    #[arg(long)]
    pub decision: Vec<DecisionId>,
    /// Keep the first N features per decision
    #[arg(long)]
    pub top: Option<usize>,
    /// Minimum instances per class before a list is flagged low-support
    #[arg(long, default_value_t = pstate::importance::DEFAULT_MIN_SUPPORT)]
    pub min_support: usize,
    /// Rows to rank on
    #[arg(long, value_enum, default_value_t = Rows::Train)]
    pub rows: Rows,
    #[command(flatten)]
    #[serde(flatten)]
    pub split: SplitArgs,
    /// Output table format
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    /// Output directory; prints to stdout when omitted
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HistogramArgs {
    /// Directory holding instances.tsv, matrix.tsv and matrix.meta.json
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub input: PathBuf,
    /// Decision family
    #[arg(long, default_value_t = AnalysisKind::LabOrder)]
    pub kind: AnalysisKind,
    /// Category axis
    #[arg(long, default_value_t = Grouping::Clinical5)]
    pub grouping: Grouping,
    /// Feature scope
    #[arg(long, default_value_t = Scope::AllFeatures)]
    pub scope: Scope,
    /// Decisions with fewer instances in either class are skipped
    #[arg(long, default_value_t = pstate::importance::DEFAULT_MIN_SUPPORT)]
    pub min_support: usize,
    /// Rows to rank on
    #[arg(long, value_enum, default_value_t = Rows::Train)]
    pub rows: Rows,
    #[command(flatten)]
    #[serde(flatten)]
    pub split: SplitArgs,
    /// Output table format
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    /// Output directory; prints to stdout when omitted
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SvmArgs {
    /// Top-k feature counts
    #[arg(long, value_delimiter = ',', default_value = "1,3,30")]
    pub k: Vec<usize>,
    /// Hinge-loss weight
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Subgradient epochs, or Newton iterations per smoothing stage
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Solver
    #[arg(long, default_value_t = SolverKind::Newton)]
    pub solver: SolverKind,
    /// Give both classes equal total cost
    #[arg(long)]
    pub balance: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Directory holding instances.tsv, matrix.tsv and matrix.meta.json
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub input: PathBuf,
    /// Decision family
    #[arg(long, default_value_t = AnalysisKind::LabOrder)]
    pub kind: AnalysisKind,
    /// Restrict to these decisions (repeatable)
    #[arg(long)]
    pub decision: Vec<DecisionId>,
    #[command(flatten)]
    #[serde(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub svm: SvmArgs,
    /// Output directory
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// Directory holding instances.tsv, matrix.tsv and matrix.meta.json
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub input: PathBuf,
    /// Model index written by `train`
    #[arg(long, default_value = "models_lab_order.json")]
    #[serde(skip)]
    pub models: PathBuf,
    /// Output table format
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    /// Output directory; prints to stdout when omitted
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Directory holding stage outputs
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub input: PathBuf,
    /// Output directory (defaults to the input directory)
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    /// JSON synthesis config (defaults apply when omitted)
    #[arg(long, conflicts_with = "events")]
    #[serde(skip)]
    pub synth_config: Option<PathBuf>,
    /// Existing event file to ingest instead of synthesizing
    #[arg(long)]
    #[serde(skip)]
    pub events: Option<PathBuf>,
    /// Synthesis seed and patient-split seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Overrides the number of synthetic patients
    #[arg(long)]
    pub patients: Option<usize>,
    /// Overrides the rule noise level
    #[arg(long)]
    pub noise: Option<f64>,
    /// Number of training patients
    #[arg(long, conflicts_with = "train_fraction")]
    pub train_count: Option<usize>,
    /// Fraction of patients used for training
    #[arg(long, default_value_t = 0.65)]
    pub train_fraction: f64,
    /// Medication analysis: commissions only or all orders
    #[arg(long, default_value_t = AnalysisKind::MedCommission)]
    pub med_kind: AnalysisKind,
    /// Keep the first N features per decision in ranking tables
    #[arg(long)]
    pub top: Option<usize>,
    /// Minimum instances per class for histograms
    #[arg(long, default_value_t = pstate::importance::DEFAULT_MIN_SUPPORT)]
    pub min_support: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub svm: SvmArgs,
    /// Output table format
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    /// Output directory
    #[arg(long, default_value = "run")]
    #[serde(skip)]
    pub out: PathBuf,
}
