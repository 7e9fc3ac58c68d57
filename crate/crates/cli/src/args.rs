use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "spikelda",
    version,
    about = "Sparse linear discriminant analysis with spiked-covariance whitening"
)]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Base seed. Falls back to the config file, then SPIKELDA_SEED, then 20240521.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for replicate-level parallelism. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output format for tables and reports.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo study on a simulated covariance model.
    Simulate(SimulateArgs),
    /// Fit a binary PCLDA rule from a labelled CSV and save it as JSON.
    Fit(FitArgs),
    /// Classify the rows of a CSV with a saved model.
    Predict(PredictArgs),
    /// Cross-validation curve for the sparsity level or NSC shrinkage.
    Tune(TuneArgs),
    /// Rate and selection-consistency checks over an (n, p) grid.
    Diagnose(DiagnoseArgs),
    /// Version, defaults and runtime settings.
    Info,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Equal correlation, Σ = ρ11ᵀ + (1 − ρ)I.
    #[value(alias = "model1")]
    Eqcorr,
    /// Equicorrelated blocks of size `block` and p − block.
    #[value(alias = "model2")]
    Block,
    /// Σ = LLᵀ + cI with random loadings.
    #[value(alias = "model3")]
    Randcorr,
    /// Two-dimensional projection experiment.
    Example1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Pclda,
    Oracle,
    Nsc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionKind {
    /// Choose s by stratified cross-validation.
    Cv,
    /// Keep the s largest coordinates.
    TopS,
    /// Hard threshold C (ln p / n)^α.
    Threshold,
}

/// Options shared by every command that fits PCLDA.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct PcldaOpts {
    /// Fixed number of spikes d.
    #[arg(long)]
    pub d: Option<usize>,
    /// Variance fraction for choosing d (default 0.9).
    #[arg(long, conflicts_with = "d")]
    pub frac: Option<f64>,
    #[arg(long, value_enum)]
    pub selection: Option<SelectionKind>,
    /// Fixed sparsity level; implies top-s selection.
    #[arg(long)]
    pub s: Option<usize>,
    /// Largest s tried by cross-validation (default 30).
    #[arg(long)]
    pub max_s: Option<usize>,
    /// Cross-validation folds (default 5).
    #[arg(long)]
    pub folds: Option<usize>,
    /// Threshold constant C (default 1.0).
    #[arg(long = "C", visible_alias = "c")]
    pub c: Option<f64>,
    /// Threshold exponent α in (0, 0.5) (default 0.3).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Keep the largest coordinate when the threshold removes everything.
    #[arg(long)]
    pub fallback: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Correlation (default 0.5; 0.9 for example1).
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// Block size for the block model (default 20).
    #[arg(long)]
    pub block: Option<usize>,
    /// Number of planted factors for randcorr (default 10).
    #[arg(long)]
    pub rank: Option<usize>,
    /// Loading distribution for randcorr: normal, uniform or t5.
    #[arg(long)]
    pub dist: Option<String>,
    /// Dimension (default 800).
    #[arg(long)]
    pub p: Option<usize>,
    /// Training rows per class (default 100; 500 for example1).
    #[arg(long)]
    pub n: Option<usize>,
    /// Test rows per class (default 100).
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Replicates (default 200; 1000 for example1).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodKind>,
    /// NSC shrinkage grid length (default 30).
    #[arg(long)]
    pub grid: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub pclda: PcldaOpts,
    /// Directory for replicates and summary files.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct FitArgs {
    /// Labelled training CSV.
    #[arg(long, value_name = "CSV")]
    pub train: Option<PathBuf>,
    /// Label column name (default "label").
    #[arg(long)]
    pub label_column: Option<String>,
    /// Where to write the model JSON.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub pclda: PcldaOpts,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct PredictArgs {
    /// Model JSON written by `fit`.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Feature CSV; a label column, if present, is used to report errors.
    #[arg(long, value_name = "CSV")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    /// Prediction CSV; standard output when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuneMethod {
    Pclda,
    Nsc,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct TuneArgs {
    #[arg(long, value_name = "CSV")]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long, value_enum)]
    pub method: Option<TuneMethod>,
    /// NSC shrinkage grid length (default 30).
    #[arg(long)]
    pub grid: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub pclda: PcldaOpts,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    /// Eigenvector 2→∞ error.
    #[value(name = "1")]
    #[serde(rename = "1")]
    One,
    /// ‖ζ̂ − ζ‖∞.
    #[value(name = "2")]
    #[serde(rename = "2")]
    Two,
    /// Exact support recovery by thresholding.
    #[value(name = "3")]
    #[serde(rename = "3")]
    Three,
    /// ‖ŴΣŴ − I‖₂.
    Identity,
    /// Checks 1 to 3.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagModel {
    /// Cosine-basis spikes with λ_k proportional to p.
    Delocalized,
    #[value(alias = "model1")]
    Eqcorr,
    #[value(alias = "model2")]
    Block,
    #[value(alias = "model3")]
    Randcorr,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct DiagnoseArgs {
    #[arg(long, value_enum)]
    pub theorem: Option<Theorem>,
    #[arg(long, value_enum)]
    pub model: Option<DiagModel>,
    /// Correlation for the simulation models (default 0.5).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Dimensions, comma separated (default 100,200,400).
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<usize>>,
    /// Total training sizes, comma separated (default 250,1000,4000).
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Replicates per cell (default 50).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long = "C", visible_alias = "c")]
    pub c: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Relative tolerance of the decay-factor bands (default 0.2).
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// n = n_factor · p for the identity check (default 50).
    #[arg(long)]
    pub n_factor: Option<usize>,
    /// Directory for one CSV per table.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Deliberately break the estimator ("identity-whitener").
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}
