//! Command-line flags and the optional config file.
//!
//! The file is TOML restricted to flat `key = value` pairs grouped in one
//! section per subcommand plus `[params]` and `[output]`. Unknown sections
//! or keys are rejected, and any flag given on the command line wins over
//! the file.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "qbm",
    version,
    about = "Damped quantum oscillator: exact, Born-Markov and Born-non-Markov moments"
)]
pub struct Cli {
    /// Config file with [params], [output] and per-subcommand sections
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $QBM_OUTPUT_DIR, then ./qbm-output)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for grid evaluations
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stationary moments from the three methods
    Stationary(StationaryArgs),
    /// Time traces of the moments from a factorized initial state
    Transient(TransientArgs),
    /// Method/exact moment ratios over a (Λ, T) grid
    Sweep(SweepArgs),
    /// Weak-coupling and Born validity report
    Validity(ValidityArgs),
    /// Stationary system-bath interaction energy and energy flow
    Interaction(InteractionArgs),
    /// Discrete-bath reference run at one parameter point
    Oracle(OracleArgs),
    /// Regenerate the ratio-vs-Λ figure data
    Figures(FiguresArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    /// Renormalized frequency Ω_R (default 1 when no frequency is given)
    #[arg(long, conflicts_with = "omega")]
    pub omega_r: Option<f64>,
    /// Bare frequency Ω instead of Ω_R
    #[arg(long)]
    pub omega: Option<f64>,
    /// Damping rate γ
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Bath cutoff Λ
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Temperature T
    #[arg(long)]
    pub temp: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StationaryArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Also evaluate the exact moments by direct quadrature
    #[arg(long)]
    pub quadrature: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransientMethod {
    Exact,
    Markov,
    Nonmarkov,
    All,
}

#[derive(Debug, Args)]
pub struct TransientArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Final time (default 50)
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Output step (default 0.1)
    #[arg(long)]
    pub dt: Option<f64>,
    /// Which schemes to trace (default all)
    #[arg(long, value_enum)]
    pub method: Option<TransientMethod>,
    /// Initial ⟨q⟩
    #[arg(long, allow_hyphen_values = true)]
    pub q0: Option<f64>,
    /// Initial ⟨p⟩
    #[arg(long, allow_hyphen_values = true)]
    pub p0: Option<f64>,
    /// Temperature of the initial thermal system state at Ω_R
    #[arg(long)]
    pub init_temp: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Damping rate γ
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Renormalized frequency Ω_R (default 1)
    #[arg(long)]
    pub omega_r: Option<f64>,
    /// Explicit Λ values, comma separated
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Number of log-spaced Λ points on [10, 10⁴] when no list is given
    #[arg(long)]
    pub lambda_points: Option<usize>,
    /// Temperatures, comma separated (default 0.2,1,5,20)
    #[arg(long, value_delimiter = ',')]
    pub temps: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ValidityArgs {
    /// groex, teufel or norte
    #[arg(long)]
    pub preset: Option<String>,
    /// With a preset: also report the point at this Λ/Ω
    #[arg(long)]
    pub lambda_over_omega: Option<f64>,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionChoice {
    Leading,
    Numerical,
    Both,
}

#[derive(Debug, Args)]
pub struct InteractionArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Leading closed form, numerical evaluation or both (default both)
    #[arg(long, value_enum)]
    pub mode: Option<InteractionChoice>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Number of bath modes
    #[arg(long)]
    pub modes: Option<usize>,
    /// Upper end of the discretized spectrum (default 10Λ)
    #[arg(long)]
    pub omega_max: Option<f64>,
    /// Averaging window start (default 3/γ)
    #[arg(long)]
    pub window_start: Option<f64>,
    /// Averaging window end (default 5/γ)
    #[arg(long)]
    pub window_end: Option<f64>,
    /// Sampling step inside the window
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FiguresArgs {
    /// Coupling strengths, one figure each (default 0.001,0.005)
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    /// Number of log-spaced Λ points on [10, 10⁴] (default 13)
    #[arg(long)]
    pub lambda_points: Option<usize>,
    /// Temperatures, comma separated (default 0.2,1,5,20)
    #[arg(long, value_delimiter = ',')]
    pub temps: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub output: Option<OutputSection>,
    pub params: Option<ParamSection>,
    pub stationary: Option<StationarySection>,
    pub transient: Option<TransientSection>,
    pub sweep: Option<SweepSection>,
    pub validity: Option<ValiditySection>,
    pub interaction: Option<InteractionSection>,
    pub oracle: Option<OracleSection>,
    pub figures: Option<FiguresSection>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSection {
    pub omega_r: Option<f64>,
    pub omega: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub temp: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationarySection {
    pub quadrature: Option<bool>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransientSection {
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub method: Option<TransientMethod>,
    pub q0: Option<f64>,
    pub p0: Option<f64>,
    pub init_temp: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub gamma: Option<f64>,
    pub omega_r: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub lambda_points: Option<usize>,
    pub temps: Option<Vec<f64>>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValiditySection {
    pub preset: Option<String>,
    pub lambda_over_omega: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSection {
    pub mode: Option<InteractionChoice>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub modes: Option<usize>,
    pub omega_max: Option<f64>,
    pub window_start: Option<f64>,
    pub window_end: Option<f64>,
    pub dt: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiguresSection {
    pub gamma: Option<Vec<f64>>,
    pub lambda_points: Option<usize>,
    pub temps: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }
}

/// The parameter block after merging flags over the file.
#[derive(Debug, Clone, Copy)]
pub struct ParamValues {
    pub omega_r: Option<f64>,
    pub omega: Option<f64>,
    pub gamma: f64,
    pub lambda: f64,
    pub temp: f64,
}

fn required(name: &str, flag: Option<f64>, file: Option<f64>) -> Result<f64, CliError> {
    flag.or(file).ok_or_else(|| {
        CliError::Config(format!(
            "missing parameter `{name}` (flag --{name} or [params] {name})"
        ))
    })
}

impl ParamArgs {
    pub fn merge(&self, file: Option<&ParamSection>) -> Result<ParamValues, CliError> {
        let f = file.cloned().unwrap_or_default();
        // a frequency on the command line replaces either frequency in the file
        let (omega_r, omega) = if self.omega_r.is_some() || self.omega.is_some() {
            (self.omega_r, self.omega)
        } else {
            (f.omega_r, f.omega)
        };
        if omega_r.is_some() && omega.is_some() {
            return Err(CliError::Config(
                "give either omega_r or omega, not both".into(),
            ));
        }
        Ok(ParamValues {
            omega_r,
            omega,
            gamma: required("gamma", self.gamma, f.gamma)?,
            lambda: required("lambda", self.lambda, f.lambda)?,
            temp: required("temp", self.temp, f.temp)?,
        })
    }
}
