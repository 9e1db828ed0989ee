//! Monte Carlo and pathwise checks of the moment, comparison and
//! reparametrization estimates.
//!
//! Every sample `i` draws from its own substream `(seed, i)`; results are
//! collected in index order and reduced with compensated sums, so reports do
//! not depend on the number of worker threads.

use std::io::{self, Write};

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{refine, sample_brownian_stream, DriverError, DriverPath, TimeGrid};
use crate::exponents::{lambda_zeta, ExponentError, DEFAULT_EPSILON};
use crate::loewner::{reverse_flow_from_drivers, LoewnerError, ReverseFlowPath, SlitMapSequence};
use crate::rng::{derive_seed, substream, SampleRng};
use crate::stats::{self, KsResult};
use crate::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{count} of {n} samples were non-finite (more than 1%)")]
    TooManyNonFinite { count: usize, n: usize },
    #[error("moment estimate {0} is not positive; cannot fit in log-log coordinates")]
    NonPositive(f64),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error(transparent)]
    Loewner(#[from] LoewnerError),
    #[error(transparent)]
    Driver(#[from] DriverError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, VerifyError> {
    Err(VerifyError::Invalid(msg.into()))
}

/// Which estimator produced a [`MomentEstimate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Estimator {
    PlainMean,
    MedianOfMeans { blocks: usize },
}

/// Estimator choice before the sample count is known.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Plain,
    #[default]
    MedianOfMeans,
}

impl std::str::FromStr for EstimatorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plain" | "plain-mean" => Ok(Self::Plain),
            "mom" | "median-of-means" => Ok(Self::MedianOfMeans),
            _ => Err(format!("unknown estimator '{s}' (expected plain or median-of-means)")),
        }
    }
}

/// Estimate of `E|X|^p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub p: f64,
    pub mean_estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub estimator: Estimator,
    /// Samples dropped because they were NaN or infinite.
    pub non_finite: usize,
}

/// `E|X|^p` from raw samples of `X`; non-finite samples are dropped and
/// counted, and more than 1% of them is an error.
pub fn moment_from_samples(xs: &[f64], p: f64, kind: EstimatorKind) -> Result<MomentEstimate, VerifyError> {
    if xs.len() < 2 {
        return invalid(format!("need at least 2 samples, got {}", xs.len()));
    }
    if !(p >= 1.0) {
        return invalid(format!("moment order p = {p} must be >= 1"));
    }
    let powered: Vec<f64> = xs.iter().filter(|x| x.is_finite()).map(|x| x.abs().powf(p)).collect();
    let non_finite = xs.len() - powered.len();
    if non_finite * 100 > xs.len() {
        return Err(VerifyError::TooManyNonFinite { count: non_finite, n: xs.len() });
    }
    let n = powered.len();
    let (mean_estimate, std_error, estimator) = match kind {
        EstimatorKind::Plain => {
            (stats::mean(&powered), stats::sample_sd(&powered) / (n as f64).sqrt(), Estimator::PlainMean)
        }
        EstimatorKind::MedianOfMeans => {
            let blocks = ((n as f64).sqrt().ceil() as usize).max(1);
            let (m, se) = stats::median_of_means(&powered, blocks);
            (m, se, Estimator::MedianOfMeans { blocks })
        }
    };
    Ok(MomentEstimate { p, mean_estimate, std_error, n_samples: n, estimator, non_finite })
}

/// Runs `sampler` on substreams `(seed, 0..n)` and collects samples in index order.
pub fn draw_samples<T: Send>(n: usize, seed: u64, sampler: impl Fn(&mut SampleRng, u64) -> T + Sync) -> Vec<T> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            sampler(&mut rng, i)
        })
        .collect()
}

pub fn estimate_moment(
    sampler: impl Fn(&mut SampleRng) -> f64 + Sync,
    p: f64,
    n: usize,
    seed: u64,
    kind: EstimatorKind,
) -> Result<MomentEstimate, VerifyError> {
    let xs = draw_samples(n, seed, |rng, _| sampler(rng));
    moment_from_samples(&xs, p, kind)
}

/// Both estimators at one point, with a caution flag when they disagree by
/// more than five standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub x: f64,
    pub median_of_means: MomentEstimate,
    pub plain: MomentEstimate,
    pub heavy_tail_caution: bool,
}

impl MomentPoint {
    pub fn from_samples(x: f64, xs: &[f64], p: f64) -> Result<Self, VerifyError> {
        let mom = moment_from_samples(xs, p, EstimatorKind::MedianOfMeans)?;
        let plain = moment_from_samples(xs, p, EstimatorKind::Plain)?;
        let gap = (mom.mean_estimate - plain.mean_estimate).abs();
        let heavy_tail_caution = gap > 5.0 * mom.std_error.max(plain.std_error);
        Ok(Self { x, median_of_means: mom, plain, heavy_tail_caution })
    }

    pub fn get(&self, kind: EstimatorKind) -> &MomentEstimate {
        match kind {
            EstimatorKind::Plain => &self.plain,
            EstimatorKind::MedianOfMeans => &self.median_of_means,
        }
    }
}

fn write_points_csv<W: Write>(points: &[MomentPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "x,mom_estimate,mom_std_error,plain_estimate,plain_std_error,n_samples,non_finite,heavy_tail_caution")?;
    for p in points {
        writeln!(
            out,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{}",
            p.x,
            p.median_of_means.mean_estimate,
            p.median_of_means.std_error,
            p.plain.mean_estimate,
            p.plain.std_error,
            p.plain.n_samples,
            p.plain.non_finite,
            p.heavy_tail_caution
        )?;
    }
    Ok(())
}

/// Half-width multiplier of the reported slope interval (in standard errors).
pub const SLOPE_CI_Z: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub x: f64,
    pub estimate: f64,
    pub std_error: f64,
}

/// Least-squares power law `m(x) ≈ e^{intercept} x^{slope}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// `SLOPE_CI_Z` delta-method standard errors.
    pub slope_ci_halfwidth: f64,
    pub points: Vec<ScalingPoint>,
}

pub fn fit_scaling(xs: &[f64], moments: &[MomentEstimate]) -> Result<ScalingFit, VerifyError> {
    if xs.len() != moments.len() {
        return invalid("xs and moments must have equal length");
    }
    let mut distinct = xs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return invalid(format!("need at least 3 distinct x values, got {}", distinct.len()));
    }
    if let Some(x) = xs.iter().find(|&&x| !(x > 0.0)) {
        return invalid(format!("x = {x} must be positive"));
    }
    if let Some(m) = moments.iter().find(|m| !(m.mean_estimate > 0.0)) {
        return Err(VerifyError::NonPositive(m.mean_estimate));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = moments.iter().map(|m| m.mean_estimate.ln()).collect();
    let fit = stats::ols(&lx, &ly);
    let mx = stats::mean(&lx);
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let var: f64 = lx
        .iter()
        .zip(moments)
        .map(|(x, m)| {
            let c = (x - mx) / sxx;
            let rel = m.std_error / m.mean_estimate;
            c * c * rel * rel
        })
        .sum();
    let points = xs
        .iter()
        .zip(moments)
        .map(|(&x, m)| ScalingPoint { x, estimate: m.mean_estimate, std_error: m.std_error })
        .collect();
    Ok(ScalingFit { slope: fit.slope, intercept: fit.intercept, slope_ci_halfwidth: SLOPE_CI_Z * var.sqrt(), points })
}

/// A named pass/fail line in a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Criterion {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

fn all_passed(c: &[Criterion]) -> bool {
    c.iter().all(|c| c.passed)
}

/// Driver steps so that `sqrt(dt) <= y_min / resolution`.
pub fn steps_for(t: f64, y_min: f64, resolution: f64) -> usize {
    ((t * (resolution / y_min).powi(2)).ceil() as usize).max(1)
}

/// Default ratio `y_min / sqrt(dt)` for Monte Carlo grids.
pub const DEFAULT_RESOLUTION: f64 = 8.0;

const MAX_STEPS: usize = 1 << 22;

fn check_steps(n: usize) -> Result<usize, VerifyError> {
    if n > MAX_STEPS {
        return invalid(format!("grid would need {n} steps (limit {MAX_STEPS}); lower the resolution or raise y"));
    }
    Ok(n)
}

// ---------------------------------------------------------------------------
// derivative moments

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FprimeConfig {
    pub kappa: f64,
    pub r: f64,
    pub t: f64,
    pub ys: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub resolution: f64,
    pub estimator: EstimatorKind,
    /// Allowed deviation of the fitted slope from `ζ(r)`.
    pub tolerance: f64,
}

impl FprimeConfig {
    pub fn new(kappa: f64, r: f64, t: f64, ys: Vec<f64>, n: usize, seed: u64) -> Self {
        Self { kappa, r, t, ys, n, seed, resolution: DEFAULT_RESOLUTION, estimator: EstimatorKind::default(), tolerance: 0.15 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FprimeReport {
    pub schema_version: u32,
    pub config: FprimeConfig,
    pub lambda: f64,
    pub zeta: f64,
    pub n_steps: usize,
    pub points: Vec<MomentPoint>,
    pub fit: ScalingFit,
    pub fit_plain: Option<ScalingFit>,
    pub criteria: Vec<Criterion>,
    pub passed: bool,
}

impl FprimeReport {
    pub fn write_points_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_points_csv(&self.points, out)
    }
}

/// `E|f̂_t'(iy)|^{λ(r)}` for each `y`, and its fitted `y`-slope against `ζ(r)`.
pub fn check_fprime_moment(cfg: &FprimeConfig) -> Result<FprimeReport, VerifyError> {
    let params = lambda_zeta(cfg.kappa, cfg.r)?;
    params.require_subcritical()?;
    if !(cfg.t > 0.0) {
        return invalid(format!("t = {} must be positive", cfg.t));
    }
    if cfg.ys.iter().any(|&y| !(y > 0.0)) {
        return invalid("every y must be positive");
    }
    let y_min = cfg.ys.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = cfg.ys.iter().copied().fold(0.0, f64::max);
    if y_max < 2.0 * y_min {
        return invalid(format!("y values must span at least a factor 2, got [{y_min}, {y_max}]"));
    }
    if cfg.n < 2 {
        return invalid("n must be at least 2");
    }
    let n_steps = check_steps(steps_for(cfg.t, y_min, cfg.resolution))?;
    let grid = TimeGrid::horizon(cfg.t, n_steps)?;
    let ws: Vec<Complex64> = cfg.ys.iter().map(|&y| Complex64::new(0.0, y)).collect();
    let kappa = cfg.kappa;
    let samples: Vec<Result<Vec<f64>, LoewnerError>> = draw_samples(cfg.n, cfg.seed, |_, i| {
        let b = sample_brownian_stream(grid, cfg.seed, i);
        let seq = SlitMapSequence::new(&crate::driver::scale_driver(&b, kappa).expect("unscaled"));
        Ok(seq.inverse_many(&ws, n_steps)?.into_iter().map(|(_, l)| l.exp()).collect())
    });
    let mut per_y = vec![Vec::with_capacity(cfg.n); ws.len()];
    for s in samples {
        match s {
            Ok(v) => v.into_iter().enumerate().for_each(|(j, x)| per_y[j].push(x)),
            Err(_) => per_y.iter_mut().for_each(|c| c.push(f64::NAN)),
        }
    }
    let points: Vec<MomentPoint> =
        cfg.ys.iter().zip(&per_y).map(|(&y, xs)| MomentPoint::from_samples(y, xs, params.lambda)).collect::<Result<_, _>>()?;
    let est: Vec<MomentEstimate> = points.iter().map(|p| *p.get(cfg.estimator)).collect();
    let fit = fit_scaling(&cfg.ys, &est)?;
    let plain: Vec<MomentEstimate> = points.iter().map(|p| p.plain).collect();
    let fit_plain = fit_scaling(&cfg.ys, &plain).ok();
    let dev = (fit.slope - params.zeta).abs();
    let criteria = vec![Criterion::new(
        "y-slope matches zeta(r)",
        dev <= cfg.tolerance,
        format!("slope {:.4} vs zeta {:.4} (|diff| {:.4} <= {})", fit.slope, params.zeta, dev, cfg.tolerance),
    )];
    Ok(FprimeReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        lambda: params.lambda,
        zeta: params.zeta,
        n_steps,
        points,
        fit,
        fit_plain,
        passed: all_passed(&criteria),
        criteria,
    })
}

// ---------------------------------------------------------------------------
// κ-differences of the inverse map

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffKappaConfig {
    pub kappa: f64,
    pub kappa_tildes: Vec<f64>,
    pub t: f64,
    pub delta: f64,
    pub x_offset: f64,
    pub p: f64,
    pub n: usize,
    pub seed: u64,
    pub resolution: f64,
    pub estimator: EstimatorKind,
    pub tolerance: f64,
    /// δ values for the supercritical sweep (used only when `p > 1 + 8/κ₊`).
    pub delta_sweep: Vec<f64>,
    /// The δ-growth lives in the tail, which median-of-means discards.
    pub sweep_estimator: EstimatorKind,
    pub epsilon: f64,
}

impl DiffKappaConfig {
    pub fn new(kappa: f64, kappa_tildes: Vec<f64>, t: f64, delta: f64, p: f64, n: usize, seed: u64) -> Self {
        Self {
            kappa,
            kappa_tildes,
            t,
            delta,
            x_offset: 0.0,
            p,
            n,
            seed,
            resolution: DEFAULT_RESOLUTION,
            estimator: EstimatorKind::default(),
            tolerance: 0.5,
            delta_sweep: vec![0.2, 0.1, 0.05],
            sweep_estimator: EstimatorKind::Plain,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaSweep {
    pub kappa_tilde: f64,
    pub points: Vec<MomentPoint>,
    pub fit: ScalingFit,
    /// Slope predicted by the bound, `1 + 8/κ₊ - p - ε`.
    pub predicted_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffKappaReport {
    pub schema_version: u32,
    pub config: DiffKappaConfig,
    pub kappa_plus: f64,
    pub critical_order: f64,
    pub n_steps: usize,
    /// One point per `κ̃`, with `x = |√κ - √κ̃|`.
    pub points: Vec<MomentPoint>,
    /// Median of `|f̂^κ - f̂^κ̃|` per `κ̃`.
    pub medians: Vec<f64>,
    pub fit: Option<ScalingFit>,
    pub sweep: Option<DeltaSweep>,
    pub criteria: Vec<Criterion>,
    pub passed: bool,
}

impl DiffKappaReport {
    pub fn write_points_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_points_csv(&self.points, out)
    }
}

/// Samples `|f̂^κ_t(w) - f̂^κ̃_t(w)|` for every κ̃, on coupled drivers.
fn diff_samples(cfg: &DiffKappaConfig, w: Complex64, kappa_tildes: &[f64], n_steps: usize) -> Result<Vec<Vec<f64>>, VerifyError> {
    let grid = TimeGrid::horizon(cfg.t, n_steps)?;
    let samples: Vec<Vec<f64>> = draw_samples(cfg.n, cfg.seed, |_, i| {
        let b = sample_brownian_stream(grid, cfg.seed, i);
        let map = |kappa: f64| -> Option<Complex64> {
            let d = crate::driver::scale_driver(&b, kappa).ok()?;
            SlitMapSequence::new(&d).inverse(w, n_steps).ok()
        };
        let base = map(cfg.kappa);
        kappa_tildes
            .iter()
            .map(|&kt| {
                if kt == cfg.kappa {
                    return 0.0;
                }
                match (base, map(kt)) {
                    (Some(a), Some(b)) => (a - b).norm(),
                    _ => f64::NAN,
                }
            })
            .collect()
    });
    let mut cols = vec![Vec::with_capacity(cfg.n); kappa_tildes.len()];
    for s in samples {
        for (j, v) in s.into_iter().enumerate() {
            cols[j].push(v);
        }
    }
    Ok(cols)
}

/// Moments of `|f̂^κ_t(x+iδ) - f̂^κ̃_t(x+iδ)|` against `|√κ - √κ̃|`.
pub fn check_f_diffkappa(cfg: &DiffKappaConfig) -> Result<DiffKappaReport, VerifyError> {
    if !(cfg.kappa > 0.0) || cfg.kappa_tildes.iter().any(|&k| !(k > 0.0)) {
        return invalid("kappa and every kappa_tilde must be positive");
    }
    if !(cfg.p >= 1.0) {
        return invalid(format!("p = {} must be >= 1", cfg.p));
    }
    if !(cfg.delta > 0.0 && cfg.delta <= 1.0) || cfg.x_offset.abs() > cfg.delta {
        return invalid(format!("need |x_offset| <= delta <= 1, got x_offset = {}, delta = {}", cfg.x_offset, cfg.delta));
    }
    if !(cfg.t > 0.0) || cfg.n < 2 {
        return invalid("t must be positive and n at least 2");
    }
    let kappa_plus = cfg.kappa_tildes.iter().copied().fold(cfg.kappa, f64::max);
    let critical_order = 1.0 + 8.0 / kappa_plus;
    let n_steps = check_steps(steps_for(cfg.t, cfg.delta, cfg.resolution))?;
    let w = Complex64::new(cfg.x_offset, cfg.delta);
    let cols = diff_samples(cfg, w, &cfg.kappa_tildes, n_steps)?;
    let sk = cfg.kappa.sqrt();
    let mut points = Vec::new();
    let mut medians = Vec::new();
    for (kt, xs) in cfg.kappa_tildes.iter().zip(&cols) {
        points.push(MomentPoint::from_samples((sk - kt.sqrt()).abs(), xs, cfg.p)?);
        let finite: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
        medians.push(stats::median(&finite));
    }
    let mut criteria = Vec::new();
    let zero: Vec<&MomentPoint> = points.iter().filter(|p| p.x == 0.0).collect();
    if !zero.is_empty() {
        let exact = zero.iter().all(|p| p.plain.mean_estimate == 0.0 && p.median_of_means.mean_estimate == 0.0);
        criteria.push(Criterion::new("kappa_tilde = kappa gives exactly 0", exact, format!("{} coincident nodes", zero.len())));
    }
    let fit_pts: Vec<&MomentPoint> = points.iter().filter(|p| p.x > 0.0).collect();
    let fit = if fit_pts.len() >= 3 {
        let xs: Vec<f64> = fit_pts.iter().map(|p| p.x).collect();
        let est: Vec<MomentEstimate> = fit_pts.iter().map(|p| *p.get(cfg.estimator)).collect();
        let fit = fit_scaling(&xs, &est)?;
        if cfg.p < critical_order {
            let dev = (fit.slope - cfg.p).abs();
            criteria.push(Criterion::new(
                "sqrt-kappa slope matches p",
                dev <= cfg.tolerance,
                format!("slope {:.4} vs p {} (|diff| {:.4} <= {})", fit.slope, cfg.p, dev, cfg.tolerance),
            ));
        }
        Some(fit)
    } else {
        None
    };
    // medians should shrink as κ̃ approaches κ
    let mut order: Vec<(f64, f64)> = points.iter().map(|p| p.x).zip(medians.iter().copied()).filter(|(x, _)| *x > 0.0).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    if order.len() >= 2 {
        let mono = order.windows(2).all(|w| w[0].1 <= w[1].1);
        criteria.push(Criterion::new("medians shrink as kappa_tilde -> kappa", mono, format!("{order:?}")));
    }
    let sweep = if cfg.p > critical_order && !cfg.delta_sweep.is_empty() {
        Some(delta_sweep(cfg, kappa_plus)?)
    } else {
        None
    };
    if let Some(s) = &sweep {
        criteria.push(Criterion::new(
            "supercritical delta-slope is negative",
            s.fit.slope < 0.0,
            format!("delta-slope {:.4}, predicted lower bound {:.4}", s.fit.slope, s.predicted_slope),
        ));
    }
    Ok(DiffKappaReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        kappa_plus,
        critical_order,
        n_steps,
        points,
        medians,
        fit,
        sweep,
        passed: all_passed(&criteria),
        criteria,
    })
}

fn delta_sweep(cfg: &DiffKappaConfig, kappa_plus: f64) -> Result<DeltaSweep, VerifyError> {
    let Some(&kt) = cfg.kappa_tildes.iter().find(|&&k| k != cfg.kappa) else {
        return invalid("delta sweep needs a kappa_tilde different from kappa");
    };
    let d_min = cfg.delta_sweep.iter().copied().fold(f64::INFINITY, f64::min);
    if !(d_min > 0.0) || cfg.delta_sweep.iter().any(|&d| d > 1.0) {
        return invalid("delta sweep values must lie in (0, 1]");
    }
    let n_steps = check_steps(steps_for(cfg.t, d_min, cfg.resolution))?;
    let mut points = Vec::new();
    for &d in &cfg.delta_sweep {
        let w = Complex64::new(cfg.x_offset.clamp(-d, d), d);
        let cols = diff_samples(cfg, w, &[kt], n_steps)?;
        points.push(MomentPoint::from_samples(d, &cols[0], cfg.p)?);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let est: Vec<MomentEstimate> = points.iter().map(|p| *p.get(cfg.sweep_estimator)).collect();
    let fit = fit_scaling(&xs, &est)?;
    Ok(DeltaSweep { kappa_tilde: kt, points, fit, predicted_slope: 1.0 + 8.0 / kappa_plus - cfg.p - cfg.epsilon })
}

// ---------------------------------------------------------------------------
// pathwise difference bound for reverse flows

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HDiffSample {
    pub lhs: f64,
    pub rhs: f64,
}

/// `h` recorded at node `j`, recentred by the driver frozen on `step`.
fn z_on_step(path: &ReverseFlowPath, v: &[f64], j: usize, step: usize) -> Complex64 {
    path.z(j) + path.v[j] - v[step]
}

/// Both sides of the pathwise bound
/// `|h¹_t(z) - h²_t(z)| <= 2(y²+4t)^{1/4} ∫ |V¹-V²| / |z¹z²| (y¹y²)^{-1/4} |(h¹_{s,t})'(h²_{s,t})'|^{1/4} ds`
/// for node drivers `v1`, `v2` (frozen on each step), evaluated on the exact
/// piecewise-constant flows with `substeps` trapezoid panels per step.
pub fn h_diff_sides(v1: &[f64], v2: &[f64], ds: f64, z: Complex64, substeps: usize) -> HDiffSample {
    let substeps = substeps.max(1);
    let p1 = reverse_flow_from_drivers(v1, ds, z, substeps, 2.0);
    let p2 = reverse_flow_from_drivers(v2, ds, z, substeps, 2.0);
    let lhs = (p1.terminal_h() - p2.terminal_h()).norm();
    let (l1t, l2t) = (p1.terminal_log_deriv(), p2.terminal_log_deriv());
    let t = ds * (v1.len() - 1) as f64;
    let h_sub = ds / substeps as f64;
    let integrand = |j: usize, m: usize| -> f64 {
        let dv = (v1[m] - v2[m]).abs();
        if dv == 0.0 {
            return 0.0;
        }
        let z1 = z_on_step(&p1, v1, j, m);
        let z2 = z_on_step(&p2, v2, j, m);
        let decay = ((l1t - p1.log_deriv[j] + l2t - p2.log_deriv[j]) / 4.0).exp();
        dv / (z1 * z2).norm() / (z1.im * z2.im).powf(0.25) * decay
    };
    let mut acc = crate::quad::CompensatedSum::default();
    for j in 0..p1.len() - 1 {
        let m = j / substeps;
        acc.add(0.5 * h_sub * (integrand(j, m) + integrand(j + 1, m)));
    }
    let rhs = 2.0 * (z.im * z.im + 4.0 * t).powf(0.25) * acc.value();
    HDiffSample { lhs, rhs }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HDiffConfig {
    pub kappa: f64,
    pub kappa_tilde: f64,
    pub z: (f64, f64),
    pub t: f64,
    pub n: usize,
    pub seed: u64,
    pub n_steps: usize,
    pub substeps: usize,
    pub slack: f64,
}

impl HDiffConfig {
    pub fn new(kappa: f64, kappa_tilde: f64, z: (f64, f64), t: f64, n: usize, seed: u64) -> Self {
        Self { kappa, kappa_tilde, z, t, n, seed, n_steps: 1000, substeps: 4, slack: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HDiffReport {
    pub schema_version: u32,
    pub config: HDiffConfig,
    pub samples: Vec<HDiffSample>,
    pub violations: usize,
    pub failed_samples: usize,
    pub max_ratio: f64,
    pub criteria: Vec<Criterion>,
    pub passed: bool,
}

impl HDiffReport {
    pub fn write_points_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "sample,lhs,rhs,ratio")?;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(out, "{i},{:.17e},{:.17e},{:.17e}", s.lhs, s.rhs, s.lhs / s.rhs)?;
        }
        Ok(())
    }
}

pub fn check_h_diff_pathwise(cfg: &HDiffConfig) -> Result<HDiffReport, VerifyError> {
    if !(cfg.z.1 > 0.0) {
        return invalid(format!("Im z = {} must be positive", cfg.z.1));
    }
    if !(cfg.kappa >= 0.0 && cfg.kappa_tilde >= 0.0) || !(cfg.t > 0.0) || cfg.n == 0 || cfg.n_steps == 0 {
        return invalid("need kappa, kappa_tilde >= 0, t > 0, n >= 1 and n_steps >= 1");
    }
    let grid = TimeGrid::horizon(cfg.t, cfg.n_steps)?;
    let z = Complex64::new(cfg.z.0, cfg.z.1);
    let (s1, s2) = (cfg.kappa.sqrt(), cfg.kappa_tilde.sqrt());
    let samples: Vec<HDiffSample> = draw_samples(cfg.n, cfg.seed, |_, i| {
        let b = sample_brownian_stream(grid, cfg.seed, i);
        let v1: Vec<f64> = b.values().iter().map(|x| s1 * x).collect();
        let v2: Vec<f64> = b.values().iter().map(|x| s2 * x).collect();
        h_diff_sides(&v1, &v2, grid.dt(), z, cfg.substeps)
    });
    let failed_samples = samples.iter().filter(|s| !s.lhs.is_finite() || !s.rhs.is_finite()).count();
    let violations = samples.iter().filter(|s| s.lhs > s.rhs * (1.0 + cfg.slack)).count();
    let max_ratio = samples.iter().filter(|s| s.rhs > 0.0).map(|s| s.lhs / s.rhs).fold(0.0, f64::max);
    let criteria = vec![
        Criterion::new(
            "no violations at the configured slack",
            violations == 0,
            format!("{violations} of {} samples exceed rhs*(1+{}); max lhs/rhs {max_ratio:.4}", cfg.n, cfg.slack),
        ),
        Criterion::new("all samples finite", failed_samples == 0, format!("{failed_samples} non-finite")),
    ];
    Ok(HDiffReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        samples,
        violations,
        failed_samples,
        max_ratio,
        passed: all_passed(&criteria),
        criteria,
    })
}

// ---------------------------------------------------------------------------
// Bessel comparison

/// Euler-Maruyama for `dX = (2/κ)/X dt + dB`; one step.
#[inline]
fn bessel_step(x: f64, c: f64, h: f64, db: f64) -> f64 {
    x + c / x * h + db
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BesselPairOutcome {
    pub ordering_violation: bool,
    pub hit_kappa: bool,
    pub hit_kappa_tilde: bool,
    pub instability: bool,
    /// Step at which the pair stopped (first hit) or the final step.
    pub stopped_at: usize,
}

/// Runs both processes on the increments `db` until either reaches the hit
/// threshold `sqrt(max(2/κ) h)` (below which the Euler map stops being
/// monotone). Returns the outcome and both paths.
pub fn bessel_pair(kappa: f64, kappa_tilde: f64, x0: f64, h: f64, db: &[f64]) -> (BesselPairOutcome, Vec<f64>, Vec<f64>) {
    let (c1, c2) = (2.0 / kappa, 2.0 / kappa_tilde);
    let threshold = (c1.max(c2) * h).sqrt();
    let mut out = BesselPairOutcome::default();
    let (mut x1, mut x2) = (x0, x0);
    let mut p1 = vec![x0];
    let mut p2 = vec![x0];
    for (k, &d) in db.iter().enumerate() {
        x1 = bessel_step(x1, c1, h, d);
        x2 = bessel_step(x2, c2, h, d);
        p1.push(x1);
        p2.push(x2);
        out.stopped_at = k + 1;
        if x1 < -threshold || x2 < -threshold {
            out.instability = true;
        }
        let (h1, h2) = (x1 <= threshold, x2 <= threshold);
        if !(h1 || h2) && x1 < x2 {
            out.ordering_violation = true;
        }
        if h1 || h2 {
            out.hit_kappa = h1;
            out.hit_kappa_tilde = h2;
            break;
        }
    }
    (out, p1, p2)
}

/// Single process until it first reaches the threshold `sqrt((2/κ) h)`.
fn bessel_hits(kappa: f64, x0: f64, h: f64, path: &[f64]) -> (bool, bool) {
    let c = 2.0 / kappa;
    let threshold = (c * h).sqrt();
    let mut x = x0;
    for w in path.windows(2) {
        x = bessel_step(x, c, h, w[1] - w[0]);
        if x < -threshold {
            return (true, true);
        }
        if x <= threshold {
            return (true, false);
        }
    }
    (false, false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesselConfig {
    pub kappa: f64,
    pub kappa_tilde: f64,
    pub x0: f64,
    pub t_max: f64,
    pub n: usize,
    pub seed: u64,
    pub dt: f64,
    /// Refinement study `(coarse dt, factor)`, run when `κ <= 4`.
    pub refinement: Option<(f64, usize)>,
}

impl BesselConfig {
    pub fn new(kappa: f64, kappa_tilde: f64, x0: f64, t_max: f64, n: usize, seed: u64) -> Self {
        Self { kappa, kappa_tilde, x0, t_max, n, seed, dt: 1e-4, refinement: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesselRefinement {
    pub coarse_dt: f64,
    pub fine_dt: f64,
    pub coarse_hit_frequency: f64,
    pub fine_hit_frequency: f64,
    pub instabilities: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesselReport {
    pub schema_version: u32,
    pub config: BesselConfig,
    pub n_steps: usize,
    pub ordering_violations: usize,
    pub hits_kappa: usize,
    pub hits_kappa_tilde: usize,
    pub instabilities: usize,
    pub hit_frequency: f64,
    pub refinement: Option<BesselRefinement>,
    pub criteria: Vec<Criterion>,
    pub passed: bool,
}

fn increments(b: &DriverPath) -> Vec<f64> {
    b.values().windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn bessel_compare(cfg: &BesselConfig) -> Result<BesselReport, VerifyError> {
    if !(cfg.kappa > 0.0 && cfg.kappa <= cfg.kappa_tilde) {
        return invalid(format!("need 0 < kappa <= kappa_tilde, got {} and {}", cfg.kappa, cfg.kappa_tilde));
    }
    if !(cfg.x0 > 0.0) || !(cfg.t_max > 0.0) || !(cfg.dt > 0.0) || cfg.n == 0 {
        return invalid("need x0 > 0, t_max > 0, dt > 0 and n >= 1");
    }
    let n_steps = check_steps((cfg.t_max / cfg.dt).round().max(1.0) as usize)?;
    let grid = TimeGrid::horizon(cfg.t_max, n_steps)?;
    let h = grid.dt();
    let outcomes: Vec<BesselPairOutcome> = draw_samples(cfg.n, cfg.seed, |_, i| {
        let b = sample_brownian_stream(grid, cfg.seed, i);
        bessel_pair(cfg.kappa, cfg.kappa_tilde, cfg.x0, h, &increments(&b)).0
    });
    let ordering_violations = outcomes.iter().filter(|o| o.ordering_violation).count();
    let hits_kappa = outcomes.iter().filter(|o| o.hit_kappa).count();
    let hits_kappa_tilde = outcomes.iter().filter(|o| o.hit_kappa_tilde).count();
    let instabilities = outcomes.iter().filter(|o| o.instability).count();
    let mut criteria = vec![Criterion::new(
        "ordering X^kappa >= X^kappa_tilde before the first hit",
        ordering_violations == 0,
        format!("{ordering_violations} of {} pairs violated", cfg.n),
    )];
    let refinement = match cfg.refinement {
        Some((coarse_dt, factor)) if cfg.kappa <= 4.0 => {
            let r = bessel_refinement(cfg.kappa, cfg.x0, cfg.t_max, cfg.n, cfg.seed, coarse_dt, factor)?;
            criteria.push(Criterion::new(
                "hit frequency decreases under refinement",
                r.fine_hit_frequency < r.coarse_hit_frequency,
                format!("dt {} -> {}: {:.4} -> {:.4}", r.coarse_dt, r.fine_dt, r.coarse_hit_frequency, r.fine_hit_frequency),
            ));
            Some(r)
        }
        _ => None,
    };
    Ok(BesselReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        n_steps,
        ordering_violations,
        hits_kappa,
        hits_kappa_tilde,
        instabilities,
        hit_frequency: hits_kappa as f64 / cfg.n as f64,
        refinement,
        passed: all_passed(&criteria),
        criteria,
    })
}

/// Hit frequency of the κ process at `coarse_dt` and at `coarse_dt/factor`,
/// the fine path being a Brownian-bridge refinement of the coarse one.
pub fn bessel_refinement(
    kappa: f64,
    x0: f64,
    t_max: f64,
    n: usize,
    seed: u64,
    coarse_dt: f64,
    factor: usize,
) -> Result<BesselRefinement, VerifyError> {
    if factor < 2 {
        return invalid("refinement factor must be at least 2");
    }
    let n_steps = check_steps((t_max / coarse_dt).round().max(1.0) as usize)?;
    check_steps(n_steps * factor)?;
    let grid = TimeGrid::horizon(t_max, n_steps)?;
    let h = grid.dt();
    let res: Vec<Result<((bool, bool), (bool, bool)), DriverError>> = draw_samples(n, seed, |_, i| {
        let b = sample_brownian_stream(grid, seed, i);
        let fine = refine(&b, factor, derive_seed(seed, i))?;
        Ok((bessel_hits(kappa, x0, h, b.values()), bessel_hits(kappa, x0, h / factor as f64, fine.values())))
    });
    let res: Vec<_> = res.into_iter().collect::<Result<_, _>>()?;
    let coarse = res.iter().filter(|r| r.0 .0).count();
    let fine = res.iter().filter(|r| r.1 .0).count();
    let instabilities = res.iter().filter(|r| r.0 .1 || r.1 .1).count();
    Ok(BesselRefinement {
        coarse_dt: h,
        fine_dt: h / factor as f64,
        coarse_hit_frequency: coarse as f64 / n as f64,
        fine_hit_frequency: fine as f64 / n as f64,
        instabilities,
    })
}

// ---------------------------------------------------------------------------
// reparametrization identity

/// The a-flow seen through the time change `σ`, with `y_{σ(s)} = e^{as}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReparamState {
    pub a: f64,
    pub s: Vec<f64>,
    pub sigma: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `sinh J_s = x_{σ(s)} / y_{σ(s)}`
    pub j: Vec<f64>,
}

/// Linear interpolation of node samples at time `r` on a uniform grid.
fn interp(values: &[f64], dr: f64, r: f64) -> f64 {
    let n = values.len() - 1;
    let u = (r / dr).clamp(0.0, n as f64);
    let k = (u.floor() as usize).min(n.saturating_sub(1));
    let w = u - k as f64;
    if n == 0 {
        values[0]
    } else {
        values[k] * (1.0 - w) + values[k + 1] * w
    }
}

const SIGMA_TOL: f64 = 1e-10;

/// `σ(s)`: the time at which the linearly interpolated `y` reaches `e^{as}`.
fn sigma_of(y: &[f64], dr: f64, target: f64) -> Option<f64> {
    let span = dr * (y.len() - 1) as f64;
    let (mut lo, mut hi) = (0.0, span);
    if interp(y, dr, lo) > target + 1e-12 || interp(y, dr, hi) < target - 1e-12 {
        return None;
    }
    while hi - lo > SIGMA_TOL * span.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if interp(y, dr, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Recentred flow samples `z_r = h_r - B̃_r` on substep nodes, with `B̃`
/// linearly interpolated between driver nodes.
struct FlowSamples {
    dr: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    log_deriv: Vec<f64>,
    b: Vec<f64>,
}

fn flow_samples(b: &[f64], scale: f64, dt: f64, z: Complex64, substeps: usize, rate: f64) -> FlowSamples {
    let v: Vec<f64> = b.iter().map(|x| scale * x).collect();
    let path = reverse_flow_from_drivers(&v, dt, z, substeps, rate);
    let dr = dt / substeps as f64;
    let bi: Vec<f64> = (0..path.len()).map(|j| interp(b, dt, j as f64 * dr)).collect();
    let h: Vec<Complex64> = (0..path.len()).map(|j| path.z(j) + path.v[j]).collect();
    let x = h.iter().zip(&bi).map(|(h, b)| h.re - scale * b).collect();
    let y = h.iter().map(|h| h.im).collect();
    FlowSamples { dr, x, y, log_deriv: path.log_deriv, b: bi }
}

/// `∫_0^t |B_s| |z_s|^{-2} y_s^{-1/2} |h'_{s,t}(z_s)|^{1/2} ds` for the flow
/// driven by `√κ B` from `iδ` (trapezoid on substep nodes).
pub fn reparam_left_integral(b: &[f64], dt: f64, kappa: f64, delta: f64, substeps: usize) -> f64 {
    let f = flow_samples(b, kappa.sqrt(), dt, Complex64::new(0.0, delta), substeps.max(1), 2.0);
    let lt = *f.log_deriv.last().unwrap();
    let g = |j: usize| {
        let z2 = f.x[j] * f.x[j] + f.y[j] * f.y[j];
        f.b[j].abs() / z2 / f.y[j].sqrt() * (0.5 * (lt - f.log_deriv[j])).exp()
    };
    let mut acc = crate::quad::CompensatedSum::default();
    for j in 0..f.x.len() - 1 {
        acc.add(0.5 * f.dr * (g(j) + g(j + 1)));
    }
    acc.value()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RightIntegral {
    pub value: f64,
    /// `σ^{-1}(T) = log(y_T)/a`
    pub sigma_inv_t: f64,
    /// `(1/2a) log(1 + 2aT)`
    pub sigma_inv_bound: f64,
    /// `σ^{-1}(T)` bound and `σ(s) >= (e^{2as}-1)/2a` at every s node.
    pub bounds_hold: bool,
    pub sigma_increasing: bool,
}

/// `κ^{-3/2} δ^{1/2} ∫_0^{σ^{-1}(T)} |B̃_{σ(s)}| e^{-as/2} |h̃'_{σ(s),T}|^{1/2} ds`
/// with `T = κt/δ²`, along the flow `dh = -a/(h - B̃) ds` from `i`.
pub fn reparam_right_integral(
    b: &[f64],
    dt: f64,
    kappa: f64,
    delta: f64,
    substeps: usize,
    s_points: usize,
) -> Result<(RightIntegral, ReparamState), VerifyError> {
    let a = 2.0 / kappa;
    let f = flow_samples(b, 1.0, dt, Complex64::new(0.0, 1.0), substeps.max(1), a);
    let t_big = f.dr * (f.y.len() - 1) as f64;
    let y_t = *f.y.last().unwrap();
    let lt = *f.log_deriv.last().unwrap();
    let sigma_inv_t = y_t.ln() / a;
    let sigma_inv_bound = (1.0 + 2.0 * a * t_big).ln() / (2.0 * a);
    let m = s_points.max(2);
    let ds = sigma_inv_t / (m - 1) as f64;
    let mut state = ReparamState { a, s: vec![], sigma: vec![], x: vec![], y: vec![], j: vec![] };
    let mut bounds_hold = sigma_inv_t <= sigma_inv_bound * (1.0 + 1e-9) + 1e-12;
    let mut vals = Vec::with_capacity(m);
    for i in 0..m {
        let s = if i + 1 == m { sigma_inv_t } else { i as f64 * ds };
        let target = (a * s).exp();
        let sigma = if i == 0 {
            0.0
        } else {
            sigma_of(&f.y, f.dr, target.min(y_t))
                .ok_or_else(|| VerifyError::Invalid(format!("sigma root not bracketed at s = {s}")))?
        };
        let lower = ((2.0 * a * s).exp() - 1.0) / (2.0 * a);
        if sigma < lower * (1.0 - 1e-8) - 1e-9 {
            bounds_hold = false;
        }
        let x = interp(&f.x, f.dr, sigma);
        let bs = interp(&f.b, f.dr, sigma);
        let l = interp(&f.log_deriv, f.dr, sigma);
        vals.push(bs.abs() * (-0.5 * a * s).exp() * (0.5 * (lt - l)).exp());
        state.s.push(s);
        state.sigma.push(sigma);
        state.x.push(x);
        state.y.push(target);
        state.j.push((x / target).asinh());
    }
    let sigma_increasing = state.sigma.windows(2).all(|w| w[1] > w[0]);
    let mut acc = crate::quad::CompensatedSum::default();
    for i in 0..m - 1 {
        acc.add(0.5 * (state.s[i + 1] - state.s[i]) * (vals[i] + vals[i + 1]));
    }
    let value = kappa.powf(-1.5) * delta.sqrt() * acc.value();
    Ok((RightIntegral { value, sigma_inv_t, sigma_inv_bound, bounds_hold, sigma_increasing }, state))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReparamConfig {
    pub kappa: f64,
    pub delta: f64,
    pub t: f64,
    pub n: usize,
    pub seed: u64,
    /// Driver steps of the original-time flow; the a-flow uses `ceil(κ·n_steps)`.
    pub n_steps: usize,
    pub substeps: usize,
    pub s_points: usize,
    pub ks_threshold: f64,
}

impl ReparamConfig {
    pub fn new(kappa: f64, delta: f64, t: f64, n: usize, seed: u64) -> Self {
        Self { kappa, delta, t, n, seed, n_steps: 256, substeps: 4, s_points: 2049, ks_threshold: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReparamReport {
    pub schema_version: u32,
    pub config: ReparamConfig,
    pub ks: KsResult,
    pub ks_retry: Option<KsResult>,
    pub retry_seed: Option<u64>,
    pub bound_failures: usize,
    pub sigma_failures: usize,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub criteria: Vec<Criterion>,
    pub passed: bool,
}

impl ReparamReport {
    pub fn write_points_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "sample,left,right")?;
        for (i, (l, r)) in self.left.iter().zip(&self.right).enumerate() {
            writeln!(out, "{i},{l:.17e},{r:.17e}")?;
        }
        Ok(())
    }
}

struct ReparamDraw {
    left: Vec<f64>,
    right: Vec<f64>,
    bound_failures: usize,
    sigma_failures: usize,
}

fn reparam_draw(cfg: &ReparamConfig, seed: u64) -> Result<ReparamDraw, VerifyError> {
    let left_grid = TimeGrid::horizon(cfg.t, cfg.n_steps)?;
    let t_big = cfg.kappa * cfg.t / (cfg.delta * cfg.delta);
    let right_steps = check_steps((cfg.kappa * cfg.n_steps as f64).ceil() as usize)?;
    let right_grid = TimeGrid::horizon(t_big, right_steps)?;
    let right_seed = derive_seed(seed, 1);
    let left: Vec<f64> = draw_samples(cfg.n, seed, |_, i| {
        let b = sample_brownian_stream(left_grid, seed, i);
        reparam_left_integral(b.values(), left_grid.dt(), cfg.kappa, cfg.delta, cfg.substeps)
    });
    let right: Vec<Result<(RightIntegral, ReparamState), VerifyError>> = draw_samples(cfg.n, right_seed, |_, i| {
        let b = sample_brownian_stream(right_grid, right_seed, i);
        reparam_right_integral(b.values(), right_grid.dt(), cfg.kappa, cfg.delta, cfg.substeps, cfg.s_points)
    });
    let mut out = ReparamDraw { left, right: Vec::with_capacity(cfg.n), bound_failures: 0, sigma_failures: 0 };
    for r in right {
        match r {
            Ok((ri, _)) => {
                if !(ri.bounds_hold && ri.sigma_increasing) {
                    out.bound_failures += 1;
                }
                out.right.push(ri.value);
            }
            Err(_) => {
                out.sigma_failures += 1;
                out.right.push(f64::NAN);
            }
        }
    }
    Ok(out)
}

/// Two-sample comparison of the original-time integral and its time-changed
/// counterpart, with one reseeded retry.
pub fn reparam_check(cfg: &ReparamConfig) -> Result<ReparamReport, VerifyError> {
    if !(cfg.kappa > 0.0) || !(cfg.delta > 0.0 && cfg.delta <= 1.0) || !(cfg.t > 0.0) {
        return invalid("need kappa > 0, 0 < delta <= 1 and t > 0");
    }
    if cfg.n < 2 || cfg.n_steps == 0 {
        return invalid("need n >= 2 and n_steps >= 1");
    }
    let first = reparam_draw(cfg, cfg.seed)?;
    let finite = |v: &[f64]| -> Vec<f64> { v.iter().copied().filter(|x| x.is_finite()).collect() };
    let ks = stats::ks_two_sample(&finite(&first.left), &finite(&first.right));
    let (ks_retry, retry_seed, draw) = if ks.p_value > cfg.ks_threshold {
        (None, None, first)
    } else {
        let seed = derive_seed(cfg.seed, 0x5EED);
        let second = reparam_draw(cfg, seed)?;
        let r = stats::ks_two_sample(&finite(&second.left), &finite(&second.right));
        (Some(r), Some(seed), second)
    };
    let p_final = ks_retry.map_or(ks.p_value, |r| r.p_value);
    let criteria = vec![
        Criterion::new(
            "two-sample KS p-value above threshold (one retry)",
            p_final > cfg.ks_threshold,
            format!("p = {:.4}{}", ks.p_value, ks_retry.map_or(String::new(), |r| format!(", retry p = {:.4}", r.p_value))),
        ),
        Criterion::new(
            "sigma^{-1}(T) and sigma lower bounds hold on every path",
            draw.bound_failures == 0 && draw.sigma_failures == 0,
            format!("{} bound failures, {} root-finding failures", draw.bound_failures, draw.sigma_failures),
        ),
    ];
    Ok(ReparamReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        ks,
        ks_retry,
        retry_seed,
        bound_failures: draw.bound_failures,
        sigma_failures: draw.sigma_failures,
        left: draw.left,
        right: draw.right,
        passed: all_passed(&criteria),
        criteria,
    })
}

/// Standard normal sampler, convenient for estimator checks.
pub fn standard_normal(rng: &mut SampleRng) -> f64 {
    StandardNormal.sample(rng)
}
