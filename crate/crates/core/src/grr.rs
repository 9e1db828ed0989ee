//! Mixed-exponent Garsia-Rodemich-Rumsey toolkit and path norms.
//!
//! Kernels follow the argument order of the GRR hypothesis:
//! `A_1j(u1, v1; u2)` bounds increments in the first variable at fixed
//! second coordinate, `A_2j(v1; u2, v2)` increments in the second variable.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponents::{ExponentError, GrrExponentConfig};
use crate::quad::{singular_square, QuadError, SingularOpts};
use crate::SCHEMA_VERSION;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrrError {
    #[error("integral {which}: {source}")]
    Quadrature { which: String, source: QuadError },
    #[error(
        "decomposition |G(x)-G(y)| <= sum A violated at x = {x:?}, y = {y:?}: lhs {lhs} > rhs {rhs}"
    )]
    Decomposition { x: [usize; 2], y: [usize; 2], lhs: f64, rhs: f64 },
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Distance used for increments of sampled paths and fields.
pub trait Metric {
    fn dist(&self, other: &Self) -> f64;
}

impl Metric for f64 {
    fn dist(&self, other: &Self) -> f64 {
        (self - other).abs()
    }
}

impl Metric for Complex64 {
    fn dist(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
}

/// Sup distance between two sampled functions on a common grid.
impl Metric for Vec<Complex64> {
    fn dist(&self, other: &Self) -> f64 {
        self.iter().zip(other).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

impl Metric for Vec<f64> {
    fn dist(&self, other: &Self) -> f64 {
        self.iter().zip(other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

pub type Kernel3<'a> = Box<dyn Fn(f64, f64, f64) -> f64 + Sync + 'a>;
pub type Kernel2<'a> = Box<dyn Fn(f64, f64) -> f64 + Sync + 'a>;

/// Bounding kernels `A_1j(u1, v1; u2)` and `A_2j(v1; u2, v2)`.
#[derive(Default)]
pub struct GrrKernels<'a> {
    pub first: Vec<Kernel3<'a>>,
    pub second: Vec<Kernel3<'a>>,
}

/// `I1 × I2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub i1: (f64, f64),
    pub i2: (f64, f64),
}

impl Rectangle {
    pub fn unit() -> Self {
        Self { i1: (0.0, 1.0), i2: (0.0, 1.0) }
    }
}

/// Quadrature settings for the M integrals.
#[derive(Clone, Debug)]
pub struct GrrQuadOpts {
    pub outer_order: usize,
    pub outer_panels: usize,
    pub inner: SingularOpts,
    /// Panel edges for the outer integral over each axis `(I1, I2)`; when
    /// set, each interval between edges is split into `outer_panels / 4`
    /// (at least one) panels instead of splitting the whole axis uniformly.
    /// Use the sample grid of an interpolated field so kinks sit on edges.
    pub breaks: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for GrrQuadOpts {
    fn default() -> Self {
        Self { outer_order: 8, outer_panels: 4, inner: SingularOpts::default(), breaks: None }
    }
}

impl GrrQuadOpts {
    /// Outer rule aligned with a field's grid; inner panels are then capped
    /// at the grid spacing of the integrated axis.
    pub fn for_grid(x1: &[f64], x2: &[f64]) -> Self {
        Self { outer_order: 4, outer_panels: 4, inner: SingularOpts::default(), breaks: Some((x1.to_vec(), x2.to_vec())) }
    }
}

fn gauss_panels(edges: impl Iterator<Item = (f64, f64)>, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = crate::quad::gauss_legendre(order);
    let mut out = Vec::new();
    for (lo, hi) in edges {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (x, w) in x.iter().zip(&w) {
            out.push((mid + half * x, half * w));
        }
    }
    out
}

fn outer_nodes(a: f64, b: f64, order: usize, panels: usize, breaks: Option<&[f64]>) -> Vec<(f64, f64)> {
    match breaks {
        Some(edges) if edges.len() >= 2 => {
            let per = (panels / 4).max(1);
            let sub = edges.windows(2).flat_map(|e| {
                let width = (e[1] - e[0]) / per as f64;
                (0..per).map(move |p| (e[0] + p as f64 * width, e[0] + (p + 1) as f64 * width))
            });
            gauss_panels(sub, order)
        }
        _ => {
            let width = (b - a) / panels as f64;
            gauss_panels((0..panels).map(|p| (a + p as f64 * width, a + (p + 1) as f64 * width)), order)
        }
    }
}

fn singular_triple(
    inner: &(dyn Fn(f64, f64, f64) -> f64 + Sync),
    outer: (f64, f64),
    outer_breaks: Option<&[f64]>,
    square: (f64, f64),
    opts: &GrrQuadOpts,
) -> Result<f64, QuadError> {
    let once = |order: usize, panels: usize| -> Result<f64, QuadError> {
        let parts: Vec<Result<f64, QuadError>> = outer_nodes(outer.0, outer.1, order, panels, outer_breaks)
            .into_par_iter()
            .map(|(w_node, weight)| {
                let f = |u: f64, v: f64| inner(u, v, w_node);
                singular_square(&f, square.0, square.1, opts.inner).map(|s| s * weight)
            })
            .collect();
        let mut acc = crate::quad::CompensatedSum::default();
        for p in parts {
            acc.add(p?);
        }
        Ok(acc.value())
    };
    let coarse = once(opts.outer_order, opts.outer_panels)?;
    let fine = once(opts.outer_order + 4, opts.outer_panels * 2)?;
    if (coarse - fine).abs() > opts.inner.rtol * fine.abs() && (coarse - fine).abs() > 1e-12 {
        return Err(QuadError::NotConverged { coarse, fine });
    }
    Ok(fine)
}

/// `M_1j = ∫_{I2} ∬_{I1²} |A_1j(u1,v1;u2)|^{q_1j} / |u1-v1|^{β_1j}` and the
/// analogous `M_2j`. Exponents are taken from `config`; no admissibility is
/// re-checked here.
pub fn grr_integrals(
    kernels: &GrrKernels<'_>,
    config: &GrrExponentConfig,
    rect: Rectangle,
    opts: &GrrQuadOpts,
) -> Result<(Vec<f64>, Vec<f64>), GrrError> {
    if kernels.first.len() != config.q1.len() || kernels.second.len() != config.q2.len() {
        return Err(GrrError::Shape(format!(
            "{} + {} kernels for {} + {} exponent pairs",
            kernels.first.len(),
            kernels.second.len(),
            config.q1.len(),
            config.q2.len()
        )));
    }
    let breaks = opts.breaks.as_ref();
    let spacing = |x: &[f64]| x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let inner_on = |axis: Option<&Vec<f64>>| {
        let mut o = opts.clone();
        if let Some(x) = axis {
            o.inner.resolution = o.inner.resolution.min(spacing(x));
        }
        o
    };
    let (opts1, opts2) = (inner_on(breaks.map(|b| &b.0)), inner_on(breaks.map(|b| &b.1)));
    let mut m1 = Vec::with_capacity(kernels.first.len());
    for (j, a) in kernels.first.iter().enumerate() {
        let (q, beta) = (config.q1[j], config.beta1[j]);
        let integrand = |u1: f64, v1: f64, u2: f64| a(u1, v1, u2).abs().powf(q) / (u1 - v1).abs().powf(beta);
        let m = singular_triple(&integrand, rect.i2, breaks.map(|b| b.1.as_slice()), rect.i1, &opts1)
            .map_err(|source| GrrError::Quadrature { which: format!("M_1{}", j + 1), source })?;
        m1.push(m);
    }
    let mut m2 = Vec::with_capacity(kernels.second.len());
    for (j, a) in kernels.second.iter().enumerate() {
        let (q, beta) = (config.q2[j], config.beta2[j]);
        let integrand = |u2: f64, v2: f64, v1: f64| a(v1, u2, v2).abs().powf(q) / (u2 - v2).abs().powf(beta);
        let m = singular_triple(&integrand, rect.i1, breaks.map(|b| b.0.as_slice()), rect.i2, &opts2)
            .map_err(|source| GrrError::Quadrature { which: format!("M_2{}", j + 1), source })?;
        m2.push(m);
    }
    Ok((m1, m2))
}

/// 1-D variant: `M_j = ∬_{I²} |A_j(u,v)|^{q_j} / |u-v|^{β_j}`.
pub fn grr_integrals_1d(
    kernels: &[Kernel2<'_>],
    q: &[f64],
    beta: &[f64],
    interval: (f64, f64),
    opts: SingularOpts,
) -> Result<Vec<f64>, GrrError> {
    if kernels.len() != q.len() || q.len() != beta.len() {
        return Err(GrrError::Shape("kernels, q and beta must have equal length".into()));
    }
    kernels
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let f = |u: f64, v: f64| a(u, v).abs().powf(q[j]) / (u - v).abs().powf(beta[j]);
            singular_square(&f, interval.0, interval.1, opts)
                .map_err(|source| GrrError::Quadrature { which: format!("M_{}", j + 1), source })
        })
        .collect()
}

/// Values of `G` on a tensor grid, stored row-major (`x1` outer).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledField2D<V> {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    values: Vec<V>,
}

impl<V> SampledField2D<V> {
    pub fn new(x1: Vec<f64>, x2: Vec<f64>, values: Vec<V>) -> Result<Self, GrrError> {
        if values.len() != x1.len() * x2.len() {
            return Err(GrrError::Shape(format!("{} values for a {}x{} grid", values.len(), x1.len(), x2.len())));
        }
        Ok(Self { x1, x2, values })
    }

    pub fn from_fn(x1: Vec<f64>, x2: Vec<f64>, f: impl Fn(f64, f64) -> V) -> Self {
        let values = x1.iter().flat_map(|&a| x2.iter().map(move |&b| (a, b))).map(|(a, b)| f(a, b)).collect();
        Self { x1, x2, values }
    }

    pub fn get(&self, i: usize, j: usize) -> &V {
        &self.values[i * self.x2.len() + j]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.x1.len(), self.x2.len())
    }

    pub fn rectangle(&self) -> Rectangle {
        Rectangle {
            i1: (self.x1[0], *self.x1.last().unwrap()),
            i2: (self.x2[0], *self.x2.last().unwrap()),
        }
    }
}

/// `H(u) - H(v)` for the piecewise-linear `H` with `H(grid[k]) = node(k)`,
/// constant outside the grid.
fn piecewise_linear_increment(grid: &[f64], node: impl Fn(usize) -> Complex64, u: f64, v: f64) -> Complex64 {
    let (lo, hi, sign) = if u >= v { (v, u, 1.0) } else { (u, v, -1.0) };
    let n = grid.len();
    if n < 2 {
        return Complex64::new(0.0, 0.0);
    }
    let lo = lo.max(grid[0]);
    let hi = hi.min(grid[n - 1]);
    if hi <= lo {
        return Complex64::new(0.0, 0.0);
    }
    let mut k = locate(grid, lo).0;
    let mut acc = Complex64::new(0.0, 0.0);
    while k + 1 < n && grid[k] < hi {
        let (a, b) = (grid[k].max(lo), grid[k + 1].min(hi));
        if b > a {
            let slope = (node(k + 1) - node(k)) / (grid[k + 1] - grid[k]);
            acc += slope * (b - a);
        }
        k += 1;
    }
    acc * sign
}

fn locate(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    if n == 1 {
        return (0, 0.0);
    }
    let k = grid.partition_point(|&g| g <= x).clamp(1, n - 1) - 1;
    let w = ((x - grid[k]) / (grid[k + 1] - grid[k])).clamp(0.0, 1.0);
    (k, w)
}

impl SampledField2D<Complex64> {
    /// Bilinear interpolation (constant extension outside the grid).
    pub fn bilinear(&self, x1: f64, x2: f64) -> Complex64 {
        let (i, a) = locate(&self.x1, x1);
        let (j, b) = locate(&self.x2, x2);
        let i1 = (i + 1).min(self.x1.len() - 1);
        let j1 = (j + 1).min(self.x2.len() - 1);
        let g = |i, j| *self.get(i, j);
        g(i, j) * (1.0 - a) * (1.0 - b) + g(i1, j) * a * (1.0 - b) + g(i, j1) * (1.0 - a) * b + g(i1, j1) * a * b
    }

    /// `G(x1, u2) - G(x1, v2)` on the bilinear interpolant, summed cell by
    /// cell from slopes so short increments keep full relative precision.
    fn increment_x2(&self, x1: f64, u2: f64, v2: f64) -> Complex64 {
        let (i, a) = locate(&self.x1, x1);
        let i1 = (i + 1).min(self.x1.len() - 1);
        let section = |j: usize| *self.get(i, j) * (1.0 - a) + *self.get(i1, j) * a;
        piecewise_linear_increment(&self.x2, section, u2, v2)
    }

    /// `G(u1, x2) - G(v1, x2)`, as [`Self::increment_x2`].
    fn increment_x1(&self, x2: f64, u1: f64, v1: f64) -> Complex64 {
        let (j, b) = locate(&self.x2, x2);
        let j1 = (j + 1).min(self.x2.len() - 1);
        let section = |i: usize| *self.get(i, j) * (1.0 - b) + *self.get(i, j1) * b;
        piecewise_linear_increment(&self.x1, section, u1, v1)
    }

    /// `A_1(u1,v1;u2) = |G(u1,u2) - G(v1,u2)|`, `A_2(v1;u2,v2) = |G(v1,u2) - G(v1,v2)|`
    /// on the bilinear interpolant. The decomposition holds by the triangle
    /// inequality.
    pub fn increment_kernels(&self) -> GrrKernels<'_> {
        GrrKernels {
            first: vec![Box::new(move |u1, v1, u2| self.increment_x1(u2, u1, v1).norm())],
            second: vec![Box::new(move |v1, u2, v2| self.increment_x2(v1, u2, v2).norm())],
        }
    }
}

/// Pair attaining the empirical constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstPair {
    pub x: [usize; 2],
    pub y: [usize; 2],
    pub x_coord: [f64; 2],
    pub y_coord: [f64; 2],
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrrReport {
    pub schema_version: u32,
    pub config: GrrExponentConfig,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    /// `max |G(x)-G(y)| / RHS(x, y)` over distinct grid pairs, RHS at `C = 1`.
    pub empirical_constant: f64,
    pub worst_pair: Option<WorstPair>,
    pub n_pairs: usize,
}

impl GrrReport {
    /// RHS of the GRR conclusion at `C = 1` for increments `(d1, d2)`.
    pub fn rhs(&self, d1: f64, d2: f64) -> f64 {
        grr_rhs(&self.config, &self.m1, &self.m2, d1, d2)
    }
}

fn pow0(d: f64, e: f64) -> f64 {
    if d == 0.0 {
        if e > 0.0 {
            0.0
        } else if e == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        d.powf(e)
    }
}

fn family_term(m: f64, q: f64, d1: f64, e1: f64, d2: f64, e2: f64) -> f64 {
    if m == 0.0 {
        return 0.0;
    }
    m.powf(1.0 / q) * (pow0(d1, e1) + pow0(d2, e2))
}

pub fn grr_rhs(config: &GrrExponentConfig, m1: &[f64], m2: &[f64], d1: f64, d2: f64) -> f64 {
    let mut s = 0.0;
    for j in 0..m1.len() {
        s += family_term(m1[j], config.q1[j], d1, config.gamma1_first[j], d2, config.gamma2_first[j]);
    }
    for j in 0..m2.len() {
        s += family_term(m2[j], config.q2[j], d1, config.gamma1_second[j], d2, config.gamma2_second[j]);
    }
    s
}

struct PairMax {
    ratio: f64,
    pair: Option<WorstPair>,
}

fn better(a: PairMax, b: PairMax) -> PairMax {
    // deterministic: larger ratio wins, ties keep the earlier pair
    if b.ratio > a.ratio {
        b
    } else {
        a
    }
}

/// Certify the GRR inequality on a sampled field.
///
/// The decomposition `|G(x)-G(y)| <= Σ|A_1j(x1,y1;x2)| + Σ|A_2j(y1;x2,y2)|`
/// is checked at every pair first; the M integrals are then computed over
/// the grid's rectangle.
pub fn verify_grr<V: Metric + Sync>(
    g: &SampledField2D<V>,
    kernels: &GrrKernels<'_>,
    config: &GrrExponentConfig,
    opts: &GrrQuadOpts,
) -> Result<GrrReport, GrrError> {
    crate::exponents::check_admissible(&config.q1, &config.q2, &config.beta1, &config.beta2)?;
    let (n1, n2) = g.shape();
    let n = n1 * n2;
    let cell = |c: usize| (c / n2, c % n2);
    let coord = |c: usize| {
        let (i, j) = cell(c);
        (g.x1[i], g.x2[j])
    };

    let violation = (0..n).into_par_iter().find_first(|&cx| {
        let (x1, x2) = coord(cx);
        (0..n).any(|cy| {
            let (y1, y2) = coord(cy);
            let lhs = g.get(cell(cx).0, cell(cx).1).dist(g.get(cell(cy).0, cell(cy).1));
            let rhs: f64 = kernels.first.iter().map(|a| a(x1, y1, x2).abs()).sum::<f64>()
                + kernels.second.iter().map(|a| a(y1, x2, y2).abs()).sum::<f64>();
            lhs > rhs * (1.0 + 1e-12) + 1e-14
        })
    });
    if let Some(cx) = violation {
        let (x1, x2) = coord(cx);
        for cy in 0..n {
            let (y1, y2) = coord(cy);
            let lhs = g.get(cell(cx).0, cell(cx).1).dist(g.get(cell(cy).0, cell(cy).1));
            let rhs: f64 = kernels.first.iter().map(|a| a(x1, y1, x2).abs()).sum::<f64>()
                + kernels.second.iter().map(|a| a(y1, x2, y2).abs()).sum::<f64>();
            if lhs > rhs * (1.0 + 1e-12) + 1e-14 {
                let (a, b) = cell(cx);
                let (c, d) = cell(cy);
                return Err(GrrError::Decomposition { x: [a, b], y: [c, d], lhs, rhs });
            }
        }
    }

    let (m1, m2) = grr_integrals(kernels, config, g.rectangle(), opts)?;
    let best = (0..n)
        .into_par_iter()
        .map(|cx| {
            let mut local = PairMax { ratio: 0.0, pair: None };
            let (i, j) = cell(cx);
            for cy in (cx + 1)..n {
                let (k, l) = cell(cy);
                let lhs = g.get(i, j).dist(g.get(k, l));
                if lhs == 0.0 {
                    continue;
                }
                let d1 = (g.x1[i] - g.x1[k]).abs();
                let d2 = (g.x2[j] - g.x2[l]).abs();
                let rhs = grr_rhs(config, &m1, &m2, d1, d2);
                let ratio = if rhs > 0.0 { lhs / rhs } else { f64::INFINITY };
                if ratio > local.ratio {
                    local = PairMax {
                        ratio,
                        pair: Some(WorstPair {
                            x: [i, j],
                            y: [k, l],
                            x_coord: [g.x1[i], g.x2[j]],
                            y_coord: [g.x1[k], g.x2[l]],
                            lhs,
                            rhs,
                        }),
                    };
                }
            }
            local
        })
        .reduce(|| PairMax { ratio: 0.0, pair: None }, better);
    Ok(GrrReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        m1,
        m2,
        empirical_constant: best.ratio,
        worst_pair: best.pair,
        n_pairs: n * n.saturating_sub(1) / 2,
    })
}

/// 1-D corollary: `|x(t)-x(s)| <= C Σ_j M_j^{1/q_j} |t-s|^{(β_j-2)/q_j}`.
pub fn verify_grr_1d<V: Metric + Sync>(
    t: &[f64],
    x: &[V],
    kernels: &[Kernel2<'_>],
    q: &[f64],
    beta: &[f64],
    opts: SingularOpts,
) -> Result<GrrReport, GrrError> {
    if t.len() != x.len() || t.is_empty() {
        return Err(GrrError::Shape("t and x must be nonempty and of equal length".into()));
    }
    let config = GrrExponentConfig::one_dimensional(q.to_vec(), beta.to_vec())?;
    let n = t.len();
    for i in 0..n {
        for k in 0..n {
            let lhs = x[i].dist(&x[k]);
            let rhs: f64 = kernels.iter().map(|a| a(t[i], t[k]).abs()).sum();
            if lhs > rhs * (1.0 + 1e-12) + 1e-14 {
                return Err(GrrError::Decomposition { x: [i, 0], y: [k, 0], lhs, rhs });
            }
        }
    }
    let m = grr_integrals_1d(kernels, q, beta, (t[0], t[n - 1]), opts)?;
    let best = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut local = PairMax { ratio: 0.0, pair: None };
            for k in (i + 1)..n {
                let lhs = x[i].dist(&x[k]);
                if lhs == 0.0 {
                    continue;
                }
                let d = (t[i] - t[k]).abs();
                let rhs: f64 = (0..m.len())
                    .filter(|&j| m[j] > 0.0)
                    .map(|j| m[j].powf(1.0 / q[j]) * pow0(d, config.gamma1_first[j]))
                    .sum();
                let ratio = if rhs > 0.0 { lhs / rhs } else { f64::INFINITY };
                if ratio > local.ratio {
                    local = PairMax {
                        ratio,
                        pair: Some(WorstPair { x: [i, 0], y: [k, 0], x_coord: [t[i], 0.0], y_coord: [t[k], 0.0], lhs, rhs }),
                    };
                }
            }
            local
        })
        .reduce(|| PairMax { ratio: 0.0, pair: None }, better);
    Ok(GrrReport {
        schema_version: SCHEMA_VERSION,
        config,
        m1: m,
        m2: vec![],
        empirical_constant: best.ratio,
        worst_pair: best.pair,
        n_pairs: n * (n - 1) / 2,
    })
}

/// Piecewise-linear path through complex samples (real paths embed on the
/// real axis).
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPath {
    t: Vec<f64>,
    x: Vec<Complex64>,
}

impl SampledPath {
    pub fn new(t: Vec<f64>, x: Vec<Complex64>) -> Result<Self, GrrError> {
        if t.len() != x.len() || t.len() < 2 {
            return Err(GrrError::Shape("path needs at least 2 samples with matching times".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GrrError::Shape("path times must be strictly increasing".into()));
        }
        Ok(Self { t, x })
    }

    pub fn from_real(t: Vec<f64>, x: Vec<f64>) -> Result<Self, GrrError> {
        Self::new(t, x.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
    }

    pub fn from_fn(t: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self, GrrError> {
        let x = t.iter().map(|&s| f(s)).collect();
        Self::from_real(t, x)
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[Complex64] {
        &self.x
    }

    pub fn eval(&self, s: f64) -> Complex64 {
        let (k, w) = locate(&self.t, s);
        self.x[k] * (1.0 - w) + self.x[k + 1] * w
    }

    fn min_step(&self) -> f64 {
        self.t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

/// `(∬ |x(t)-x(s)|^q / |t-s|^{1+δq} ds dt)^{1/q}` over the path's interval.
pub fn sobolev_seminorm(path: &SampledPath, delta: f64, q: f64) -> Result<f64, GrrError> {
    if !(delta > 0.0 && delta < 1.0) || !(q > 1.0) {
        return Err(GrrError::Shape(format!("need 0 < delta < 1 and q > 1, got delta = {delta}, q = {q}")));
    }
    let e = 1.0 + delta * q;
    let f = |u: f64, v: f64| (path.eval(u) - path.eval(v)).norm().powf(q) / (u - v).abs().powf(e);
    let opts = SingularOpts { resolution: path.min_step(), ..SingularOpts::default() };
    let (a, b) = (path.t[0], *path.t.last().unwrap());
    let integral = singular_square(&f, a, b, opts)
        .map_err(|source| GrrError::Quadrature { which: "Slobodeckij".into(), source })?;
    Ok(integral.max(0.0).powf(1.0 / q))
}

/// Largest path length for the exact p-variation program.
pub const PVAR_EXACT_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathNorms {
    pub holder_constant: f64,
    pub holder_argmax: (usize, usize),
    pub p_variation: f64,
    /// False when the path exceeded [`PVAR_EXACT_CAP`] and the windowed
    /// lower bound was used.
    pub p_variation_exact: bool,
}

/// Hölder constant `max |x_i-x_j| / |t_i-t_j|^α` over all pairs.
pub fn holder_constant<V: Metric + Sync>(t: &[f64], x: &[V], alpha: f64) -> (f64, (usize, usize)) {
    let n = t.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (0.0, (0, 0));
            for j in (i + 1)..n {
                let r = x[i].dist(&x[j]) / (t[j] - t[i]).abs().powf(alpha);
                if r > best.0 {
                    best = (r, (i, j));
                }
            }
            best
        })
        .reduce(|| (0.0, (0, 0)), |a, b| if b.0 > a.0 { b } else { a })
}

/// `(sup_partitions Σ d(x_{t_k}, x_{t_{k+1}})^p)^{1/p}` over grid partitions.
///
/// Exact dynamic program for `n <= PVAR_EXACT_CAP`; beyond that each node
/// only looks back `PVAR_EXACT_CAP` nodes, which gives a lower bound.
pub fn p_variation<V: Metric>(x: &[V], p: f64) -> (f64, bool) {
    let n = x.len();
    if n < 2 {
        return (0.0, true);
    }
    let window = if n <= PVAR_EXACT_CAP { n } else { PVAR_EXACT_CAP };
    let mut best = vec![0.0f64; n];
    for j in 1..n {
        let lo = j.saturating_sub(window);
        let mut b = 0.0f64;
        for i in lo..j {
            let v = best[i] + x[i].dist(&x[j]).powf(p);
            if v > b {
                b = v;
            }
        }
        best[j] = b;
    }
    (best[n - 1].powf(1.0 / p), n <= PVAR_EXACT_CAP)
}

pub fn path_norms<V: Metric + Sync>(t: &[f64], x: &[V], alpha: f64, p: f64) -> Result<PathNorms, GrrError> {
    if t.len() != x.len() || t.len() < 2 {
        return Err(GrrError::Shape("path needs at least 2 samples with matching times".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) || !(p >= 1.0) {
        return Err(GrrError::Shape(format!("need 0 < alpha <= 1 and p >= 1, got alpha = {alpha}, p = {p}")));
    }
    let (holder_constant, holder_argmax) = holder_constant(t, x, alpha);
    let (p_variation, p_variation_exact) = p_variation(x, p);
    Ok(PathNorms { holder_constant, holder_argmax, p_variation, p_variation_exact })
}
