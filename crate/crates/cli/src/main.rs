mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use rolemodel::{Error, ErrorKind};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "rolemodel", version, about = "Peer-influence estimation under latent homophily")]
struct Cli {
    /// key=value file (or a previous run's manifest.json) supplying defaults for any flag
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a Monte Carlo bias study and write its bias table
    Simulate(SimulateArgs),
    /// Embed a network and write latent positions and error covariances
    Embed(EmbedArgs),
    /// Fit the peer-effect specifications on a residents/events unit
    Estimate(EstimateArgs),
    /// Run buddy-intervention cascades on a residents/events unit
    Counterfactual(CounterfactualArgs),
    /// Write a synthetic residents/events unit with a planted peer effect
    GenSynthetic(GenSyntheticArgs),
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR", default_value = "out")]
    #[serde(skip)]
    pub out: PathBuf,
    /// Record wall time in the manifest (makes it differ between runs)
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    #[serde(skip)]
    pub timing: bool,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct UnitInput {
    #[arg(long, value_name = "CSV")]
    pub residents: PathBuf,
    #[arg(long, value_name = "CSV")]
    pub events: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum CovArg {
    Rdpg,
    Sbm,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum DefinitionArg {
    Def1,
    Def2,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub enum StudyArg {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "B", alias = "b")]
    B,
    #[value(name = "C", alias = "c")]
    C,
    #[value(name = "D", alias = "d")]
    D,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EmbedOptions {
    /// Embedding dimension (ignored with --select-d)
    #[arg(long, default_value_t = rolemodel::pipeline::DEFAULT_D)]
    pub d: usize,
    /// Choose d by held-out edge AUC over 1..=8
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub select_d: bool,
    #[arg(long, default_value_t = 2)]
    pub k_clusters: usize,
    #[arg(long, value_enum, default_value_t = CovArg::Rdpg)]
    pub cov: CovArg,
    /// Weight a peer only by the events it sent to the ego
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub sender_only: bool,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = StudyArg::A)]
    pub study: StudyArg,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// Override the study's sweep values (n, density, or m)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sweep: Option<Vec<f64>>,
    /// Override the fixed network size for density and m sweeps
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k_clusters: Option<usize>,
    #[arg(long, value_enum)]
    pub cov: Option<CovArg>,
    /// Also report the estimator that sees the true latent positions
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub oracle: bool,
    /// Add an intercept column to the fitted designs
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub intercept: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EmbedArgs {
    /// Dense adjacency CSV; alternative to --residents/--events
    #[arg(long, value_name = "CSV", conflicts_with_all = ["residents", "events"])]
    pub graph: Option<PathBuf>,
    #[arg(long, value_name = "CSV", requires = "events")]
    pub residents: Option<PathBuf>,
    #[arg(long, value_name = "CSV", requires = "residents")]
    pub events: Option<PathBuf>,
    /// Binarize the adjacency before embedding
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub binarize: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub embed: EmbedOptions,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: UnitInput,
    #[command(flatten)]
    #[serde(flatten)]
    pub embed: EmbedOptions,
    #[arg(long, value_enum, default_value_t = DefinitionArg::Def1)]
    pub definition: DefinitionArg,
    /// Also fit the corrected model on binarized exposures
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub binarize: bool,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub race_interactions: bool,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub logistic: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CounterfactualArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: UnitInput,
    #[command(flatten)]
    #[serde(flatten)]
    pub embed: EmbedOptions,
    /// LSI percentile cutoffs; residents above each cutoff are targeted
    #[arg(long, value_delimiter = ',', default_value = "90,80,75")]
    pub cutoff_percentile: Vec<f64>,
    /// Also run the cascade targeting every observed failure
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub true_failures: bool,
    /// Buddy tie weight; defaults to the median positive tie weight
    #[arg(long)]
    pub buddy_weight: Option<f64>,
    /// Threshold grid step
    #[arg(long, default_value_t = rolemodel::counterfact::DEFAULT_GRID_STEP)]
    pub grid_step: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenSyntheticArgs {
    #[arg(long, default_value_t = 337)]
    pub n_residents: usize,
    #[arg(long, default_value_t = 7400.0)]
    pub expected_events: f64,
    /// Planted peer effect on graduation probability
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

fn cli_command() -> clap::Command {
    let mut cmd = Cli::command().args_override_self(true);
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in names {
        cmd = cmd.mut_subcommand(name, |s| s.args_override_self(true));
    }
    cmd
}

fn report_error(err: &Error) -> ExitCode {
    let (kind, code) = match err.kind() {
        ErrorKind::Config => ("config", 2),
        ErrorKind::Data => ("data", 3),
        ErrorKind::Numerical => ("numerical", 4),
    };
    let body = serde_json::json!({
        "error": { "kind": kind, "exit_code": code, "message": err.to_string() }
    });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let cmd = cli_command();
    let argv = match config::merge_config(argv, &cmd) {
        Ok(a) => a,
        Err(e) => return report_error(&e),
    };
    let matches = match cmd.try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Embed(a) => commands::embed(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Counterfactual(a) => commands::counterfactual(a),
        Command::GenSynthetic(a) => commands::gen_synthetic(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e),
    }
}
