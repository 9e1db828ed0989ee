use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sle_core::verify::EstimatorKind;

#[derive(Parser, Debug)]
#[command(name = "sle-lab", version, about = "Loewner traces, SLE exponent calculus and Monte Carlo checks")]
pub struct Cli {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory (default: $SLE_LAB_OUTPUT_DIR, then the working directory).
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads (never changes results).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Approximate SLE trace γ(t) = f̂_t(i y0) on one seeded Brownian driver.
    Trace(TraceArgs),
    /// Joint field γ(t, κ) on one shared driver, with its two-parameter Hölder constant.
    Field(FieldArgs),
    /// Exponent calculus for one κ (and optionally r).
    Exponents(ExponentsArgs),
    /// Moments of |f̂_t'(iy)|^λ(r) against y.
    VerifyFprime(FprimeArgs),
    /// Moments of |f̂^κ - f̂^κ̃| against |√κ - √κ̃|.
    VerifyDiffkappa(DiffKappaArgs),
    /// Pathwise bound on |h¹_t(z) - h²_t(z)| for coupled reverse flows.
    VerifyHdiff(HDiffArgs),
    /// Ordering of coupled Bessel-type processes.
    VerifyBessel(BesselArgs),
    /// Two-sample test of the time-change law identity.
    VerifyReparam(ReparamArgs),
    /// Mixed-exponent GRR integrals and empirical certificate on a field.
    GrrCheck(GrrArgs),
    /// Hölder, p-variation and Sobolev norms of a trace or of κ ↦ γ^κ.
    Norms(NormsArgs),
}

impl Cmd {
    pub fn name(&self) -> &'static str {
        match self {
            Cmd::Trace(_) => "trace",
            Cmd::Field(_) => "field",
            Cmd::Exponents(_) => "exponents",
            Cmd::VerifyFprime(_) => "verify-fprime",
            Cmd::VerifyDiffkappa(_) => "verify-diffkappa",
            Cmd::VerifyHdiff(_) => "verify-hdiff",
            Cmd::VerifyBessel(_) => "verify-bessel",
            Cmd::VerifyReparam(_) => "verify-reparam",
            Cmd::GrrCheck(_) => "grr-check",
            Cmd::Norms(_) => "norms",
        }
    }

    /// Resolved arguments, for the replay file.
    pub fn args_json(&self) -> serde_json::Value {
        let v = match self {
            Cmd::Trace(a) => serde_json::to_value(a),
            Cmd::Field(a) => serde_json::to_value(a),
            Cmd::Exponents(a) => serde_json::to_value(a),
            Cmd::VerifyFprime(a) => serde_json::to_value(a),
            Cmd::VerifyDiffkappa(a) => serde_json::to_value(a),
            Cmd::VerifyHdiff(a) => serde_json::to_value(a),
            Cmd::VerifyBessel(a) => serde_json::to_value(a),
            Cmd::VerifyReparam(a) => serde_json::to_value(a),
            Cmd::GrrCheck(a) => serde_json::to_value(a),
            Cmd::Norms(a) => serde_json::to_value(a),
        };
        v.expect("arguments serialize")
    }
}

#[derive(Args, Debug, Serialize)]
pub struct TraceArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 1024)]
    pub steps: usize,
    #[arg(long)]
    pub seed: u64,
    /// Approximation height (default sqrt(dt)).
    #[arg(long)]
    pub y0: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct FieldArgs {
    #[arg(long, default_value_t = 1.5)]
    pub kappa_min: f64,
    #[arg(long, default_value_t = 2.5)]
    pub kappa_max: f64,
    #[arg(long, default_value_t = 16)]
    pub n_kappa: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 256)]
    pub steps: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub y0: Option<f64>,
    /// Time exponent of the Hölder constant (default: fraction of the theoretical one).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// κ exponent of the Hölder constant.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub exponent_fraction: f64,
    #[arg(long, default_value_t = sle_core::exponents::DEFAULT_EPSILON)]
    pub epsilon: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct ExponentsArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, default_value_t = sle_core::exponents::DEFAULT_EPSILON)]
    pub epsilon: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct FprimeArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub r: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1,0.05")]
    pub ys: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Ratio y_min / sqrt(dt) of the driver grid.
    #[arg(long, default_value_t = sle_core::verify::DEFAULT_RESOLUTION)]
    pub resolution: f64,
    #[arg(long, default_value = "median-of-means")]
    pub estimator: EstimatorKind,
    #[arg(long, default_value_t = 0.15)]
    pub tolerance: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct DiffKappaArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub kappa_tildes: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub x_offset: f64,
    #[arg(long, default_value_t = 3.0)]
    pub p: f64,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = sle_core::verify::DEFAULT_RESOLUTION)]
    pub resolution: f64,
    #[arg(long, default_value = "median-of-means")]
    pub estimator: EstimatorKind,
    #[arg(long, default_value_t = 0.5)]
    pub tolerance: f64,
    /// δ values of the sweep run when p exceeds 1 + 8/κ₊.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05")]
    pub delta_sweep: Vec<f64>,
    #[arg(long, default_value = "plain")]
    pub sweep_estimator: EstimatorKind,
    #[arg(long, default_value_t = sle_core::exponents::DEFAULT_EPSILON)]
    pub epsilon: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct HDiffArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub kappa_tilde: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub z_re: f64,
    #[arg(long, default_value_t = 1.0)]
    pub z_im: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 4)]
    pub substeps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub slack: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct BesselArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub kappa_tilde: f64,
    #[arg(long, default_value_t = 1.0)]
    pub x0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    /// Coarse step of the hit-frequency refinement study (κ ≤ 4 only).
    #[arg(long)]
    pub refine_dt: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub refine_factor: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct ReparamArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 256)]
    pub steps: usize,
    #[arg(long, default_value_t = 4)]
    pub substeps: usize,
    #[arg(long, default_value_t = 2049)]
    pub s_points: usize,
    #[arg(long, default_value_t = 0.01)]
    pub ks_threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrrSource {
    /// γ(t, κ) sampled on one driver, with increment kernels.
    TraceField,
    /// G = x1 + x2 on the unit square.
    Linear,
    /// G = 1 on the unit square.
    Constant,
}

#[derive(Args, Debug, Serialize)]
pub struct GrrArgs {
    #[arg(long, value_enum, default_value_t = GrrSource::TraceField)]
    pub source: GrrSource,
    #[arg(long, default_value_t = 1.5)]
    pub kappa_min: f64,
    #[arg(long, default_value_t = 2.5)]
    pub kappa_max: f64,
    #[arg(long, default_value_t = 8)]
    pub n_kappa: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 32)]
    pub steps: usize,
    /// Required for the trace-field source.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Nodes per axis of the synthetic sources.
    #[arg(long, default_value_t = 9)]
    pub grid: usize,
    #[arg(long, default_value_t = sle_core::exponents::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Exponent overrides (give all four or none).
    #[arg(long)]
    pub q1: Option<f64>,
    #[arg(long)]
    pub q2: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Gauss order of the outer rule (default 8; 4 per cell on trace fields).
    #[arg(long)]
    pub outer_order: Option<usize>,
    /// Outer panels (per 4 grid cells on trace fields).
    #[arg(long)]
    pub outer_panels: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormsOver {
    /// t ↦ γ(t) for one κ.
    Time,
    /// κ ↦ γ^κ(·) in the sup metric over t.
    Kappa,
}

#[derive(Args, Debug, Serialize)]
pub struct NormsArgs {
    #[arg(long, value_enum, default_value_t = NormsOver::Time)]
    pub over: NormsOver,
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.5)]
    pub kappa_min: f64,
    #[arg(long, default_value_t = 2.5)]
    pub kappa_max: f64,
    #[arg(long, default_value_t = 16)]
    pub n_kappa: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 256)]
    pub steps: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub y0: Option<f64>,
    /// Hölder exponent (default: bound from the exponent calculus, less epsilon; 0.5 over κ).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Variation exponent (default: (1 + κ/8) ∧ 2 plus epsilon; 2 over κ).
    #[arg(long)]
    pub p: Option<f64>,
    /// Sobolev order and integrability (time paths only).
    #[arg(long, default_value_t = 0.25)]
    pub sobolev_delta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub sobolev_q: f64,
    #[arg(long, default_value_t = sle_core::exponents::DEFAULT_EPSILON)]
    pub epsilon: f64,
}
