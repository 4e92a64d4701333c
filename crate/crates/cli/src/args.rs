use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use grl_core::reflected::Horizon;
use serde::Serialize;

#[derive(Parser, Debug, Serialize)]
#[command(name = "grl", version, about = "Gaussian and gamma-reflected process tail toolkit")]
#[command(args_override_self = true)]
pub struct Cli {
    /// RNG seed; falls back to $GRL_SEED, then 0.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub seed: Option<u64>,

    /// Worker threads: a positive integer or `auto`.
    #[arg(long, global = true, default_value = "auto", value_parser = parse_threads)]
    #[serde(skip)]
    pub threads: Threads,

    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// TOML file with the same keys as the flags; flags win.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threads {
    Auto,
    Fixed(usize),
}

fn parse_threads(s: &str) -> Result<Threads, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Threads::Auto);
    }
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(Threads::Fixed(n)),
        _ => Err(format!("expected a positive integer or `auto`, got {s:?}")),
    }
}

pub fn parse_horizon(s: &str) -> Result<Horizon, String> {
    s.parse().map_err(|e: grl_core::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Emit fBm paths and their gamma-reflected images.
    Simulate(SimulateArgs),
    /// Monte Carlo tail of the reflected supremum.
    Tail(TailArgs),
    /// Coupled ratio psi_gamma / psi_0 on shared paths.
    Ratio(TailArgs),
    /// Pickands and Piterbarg constants, exact or simulated.
    Constants(ConstantsArgs),
    /// Evaluate an asymptotic formula by name.
    Asymptotics(AsymptoticsArgs),
    /// Build a Gaussian field on a lattice and compare its tail with theory.
    Fieldlab(FieldlabArgs),
    /// Run the acceptance criteria.
    Verify(VerifyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Tail(_) => "tail",
            Command::Ratio(_) => "ratio",
            Command::Constants(_) => "constants",
            Command::Asymptotics(_) => "asymptotics",
            Command::Fieldlab(_) => "fieldlab",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(long = "H", default_value_t = 0.5)]
    #[serde(rename = "H")]
    pub hurst: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    #[serde(rename = "T")]
    pub horizon: f64,
    #[arg(long, default_value_t = 1.0 / 256.0)]
    pub step: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct TailArgs {
    #[arg(long = "H", default_value_t = 0.5)]
    #[serde(rename = "H")]
    pub hurst: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    /// Horizon: a positive number or `inf`.
    #[arg(long = "T", default_value = "inf", value_parser = parse_horizon)]
    #[serde(rename = "T")]
    pub horizon: Horizon,
    #[arg(long, default_value_t = 1.0)]
    pub u: f64,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0 / 256.0)]
    pub step: f64,
    /// Truncation multiplier for infinite horizons.
    #[arg(long, default_value_t = 4.0)]
    pub kappa: f64,
    /// Skip the doubled-horizon check for infinite horizons.
    #[arg(long)]
    pub no_doubling: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantFamily {
    Exact,
    Pickands,
    Piterbarg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    Crude,
    MixtureTilt,
}

#[derive(Args, Debug, Serialize)]
pub struct ConstantsArgs {
    #[arg(value_enum)]
    pub family: ConstantFamily,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Piterbarg drift parameter; without it `exact` returns `H_alpha`.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub two_sided: bool,
    /// Single window (T for Pickands, S for Piterbarg) instead of the ladder.
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [2.0, 4.0, 8.0, 16.0])]
    pub windows: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formula {
    Psi0Inf,
    Psi0Finite,
    PsiGammaInf,
    PsiGammaFinite,
    RatioConstant,
    VarianceY,
    VarianceZ,
    MaximizerY,
    FieldMixed,
    FieldTwoParam,
}

impl Formula {
    pub fn name(&self) -> &'static str {
        match self {
            Formula::Psi0Inf => "psi0-inf",
            Formula::Psi0Finite => "psi0-finite",
            Formula::PsiGammaInf => "psi-gamma-inf",
            Formula::PsiGammaFinite => "psi-gamma-finite",
            Formula::RatioConstant => "ratio-constant",
            Formula::VarianceY => "variance-y",
            Formula::VarianceZ => "variance-z",
            Formula::MaximizerY => "maximizer-y",
            Formula::FieldMixed => "field-mixed",
            Formula::FieldTwoParam => "field-two-param",
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct AsymptoticsArgs {
    #[arg(value_enum)]
    pub formula: Formula,
    #[arg(long = "H")]
    #[serde(rename = "H", skip_serializing_if = "Option::is_none")]
    pub hurst: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long = "T", default_value = "inf", value_parser = parse_horizon)]
    #[serde(rename = "T")]
    pub horizon: Horizon,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[command(flatten)]
    pub field: FieldParams,
    /// Estimate constants without a closed form by simulation.
    #[arg(long)]
    pub simulate: bool,
    /// Samples per ladder rung when simulating constants.
    #[arg(long, default_value_t = 20_000)]
    pub ladder_n: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct FieldParams {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub s0_interior: bool,
    #[arg(long)]
    pub t0_interior: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Mixed,
    RankOne,
}

#[derive(Args, Debug, Serialize)]
pub struct FieldlabArgs {
    /// TOML field spec; overrides --preset.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Mixed)]
    pub preset: Preset,
    /// Exponent for the mixed preset.
    #[arg(long, default_value_t = 1.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 21)]
    pub ns: usize,
    #[arg(long, default_value_t = 21)]
    pub nt: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [2.0, 3.0, 4.0])]
    pub u: Vec<f64>,
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long)]
    pub simulate: bool,
    #[arg(long, default_value_t = 20_000)]
    pub ladder_n: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    /// Comma-separated criterion ids; all by default.
    #[arg(long, value_delimiter = ',')]
    pub criteria: Vec<u8>,
}
