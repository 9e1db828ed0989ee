//! The joint trace field `γ(t, κ)` driven by one shared Brownian path, and
//! its empirical two-parameter Hölder constant.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{scale_driver, DriverError, DriverPath, TimeGrid};
use crate::loewner::SlitMapSequence;
use crate::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid kappa grid: {0}")]
    KappaGrid(String),
    #[error("driver must be an unscaled Brownian path")]
    ScaledDriver,
    #[error("y0 must be positive, got {0}")]
    InvalidHeight(f64),
    #[error("exponents must lie in (0, 1], got alpha = {alpha}, eta = {eta}")]
    InvalidExponents { alpha: f64, eta: f64 },
    #[error("field shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Driver(#[from] DriverError),
}

/// Uniform grid on `[kappa_min, kappa_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaGrid {
    kappa_min: f64,
    kappa_max: f64,
    n_kappa: usize,
}

impl KappaGrid {
    pub fn new(kappa_min: f64, kappa_max: f64, n_kappa: usize) -> Result<Self, FieldError> {
        if !(kappa_min > 0.0) || !(kappa_max >= kappa_min) || !kappa_max.is_finite() {
            return Err(FieldError::KappaGrid(format!("need 0 < kappa_min <= kappa_max, got [{kappa_min}, {kappa_max}]")));
        }
        if n_kappa == 0 || (n_kappa == 1 && kappa_min != kappa_max) {
            return Err(FieldError::KappaGrid(format!("{n_kappa} nodes cannot span [{kappa_min}, {kappa_max}]")));
        }
        Ok(Self { kappa_min, kappa_max, n_kappa })
    }

    pub fn single(kappa: f64) -> Result<Self, FieldError> {
        Self::new(kappa, kappa, 1)
    }

    pub fn kappa_min(&self) -> f64 {
        self.kappa_min
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappa_max
    }

    pub fn n_kappa(&self) -> usize {
        self.n_kappa
    }

    pub fn step(&self) -> f64 {
        if self.n_kappa == 1 {
            0.0
        } else {
            (self.kappa_max - self.kappa_min) / (self.n_kappa - 1) as f64
        }
    }

    pub fn node(&self, j: usize) -> f64 {
        if j + 1 == self.n_kappa {
            self.kappa_max
        } else {
            self.kappa_min + j as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_kappa).map(|j| self.node(j)).collect()
    }

    /// Halved spacing: `2n - 1` nodes, a superset of the current ones.
    pub fn refined(&self) -> Self {
        Self { n_kappa: if self.n_kappa == 1 { 1 } else { 2 * self.n_kappa - 1 }, ..*self }
    }

    /// Whether every node lies below 8/3, as joint-continuity checks require.
    pub fn below_critical(&self) -> bool {
        self.kappa_max < 8.0 / 3.0
    }
}

/// `γ(t_k, κ_j)` stored row-major in `t`; failed cells are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceField {
    pub t_grid: TimeGrid,
    pub k_grid: KappaGrid,
    gamma: Vec<Option<Complex64>>,
    pub y0: f64,
    pub seed: Option<u64>,
}

impl TraceField {
    /// Synthetic field from a closure (used for checks with known constants).
    pub fn from_fn(t_grid: TimeGrid, k_grid: KappaGrid, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let ks = k_grid.nodes();
        let gamma = t_grid.nodes().flat_map(|t| ks.iter().map(move |&k| (t, k))).map(|(t, k)| Some(f(t, k))).collect();
        Self { t_grid, k_grid, gamma, y0: 0.0, seed: None }
    }

    pub fn from_cells(t_grid: TimeGrid, k_grid: KappaGrid, gamma: Vec<Option<Complex64>>) -> Result<Self, FieldError> {
        if gamma.len() != t_grid.n_nodes() * k_grid.n_kappa() {
            return Err(FieldError::Shape(format!("{} cells for {}x{}", gamma.len(), t_grid.n_nodes(), k_grid.n_kappa())));
        }
        Ok(Self { t_grid, k_grid, gamma, y0: 0.0, seed: None })
    }

    pub fn get(&self, k: usize, j: usize) -> Option<Complex64> {
        self.gamma[k * self.k_grid.n_kappa() + j]
    }

    pub fn column(&self, j: usize) -> Vec<Option<Complex64>> {
        (0..self.t_grid.n_nodes()).map(|k| self.get(k, j)).collect()
    }

    pub fn n_cells(&self) -> usize {
        self.gamma.len()
    }

    pub fn failed_cells(&self) -> usize {
        self.gamma.iter().filter(|g| g.is_none()).count()
    }

    /// Long format `t,kappa,re_gamma,im_gamma`; failed cells are written as `nan`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,kappa,re_gamma,im_gamma")?;
        let ks = self.k_grid.nodes();
        for (k, t) in self.t_grid.nodes().enumerate() {
            for (j, kappa) in ks.iter().enumerate() {
                match self.get(k, j) {
                    Some(g) => writeln!(out, "{t:.17e},{kappa:.17e},{:.17e},{:.17e}", g.re, g.im)?,
                    None => writeln!(out, "{t:.17e},{kappa:.17e},nan,nan")?,
                }
            }
        }
        Ok(())
    }

    pub fn metadata(&self) -> FieldMetadata {
        FieldMetadata {
            schema_version: SCHEMA_VERSION,
            seed: self.seed,
            y0: self.y0,
            t_grid: self.t_grid,
            k_grid: self.k_grid,
            failed_cells: self.failed_cells(),
        }
    }
}

/// JSON sidecar of a field CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMetadata {
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub y0: f64,
    pub t_grid: TimeGrid,
    pub k_grid: KappaGrid,
    pub failed_cells: usize,
}

/// One trace per κ node, all driven by `√κ · B` for the same `B`.
pub fn sample_field(b: &DriverPath, k_grid: &KappaGrid, y0: f64) -> Result<TraceField, FieldError> {
    if b.is_scaled() {
        return Err(FieldError::ScaledDriver);
    }
    if !(y0 > 0.0) {
        return Err(FieldError::InvalidHeight(y0));
    }
    let seqs: Vec<SlitMapSequence> = k_grid
        .nodes()
        .into_iter()
        .map(|kappa| scale_driver(b, kappa).map(|d| SlitMapSequence::new(&d)))
        .collect::<Result<_, _>>()?;
    let nk = k_grid.n_kappa();
    let n_nodes = b.grid().n_nodes();
    let w = Complex64::new(0.0, y0);
    let gamma: Vec<Option<Complex64>> = (0..n_nodes * nk)
        .into_par_iter()
        .map(|c| {
            let (k, j) = (c / nk, c % nk);
            if k == 0 {
                Some(Complex64::new(0.0, 0.0))
            } else {
                seqs[j].inverse(w, k).ok()
            }
        })
        .collect();
    Ok(TraceField { t_grid: *b.grid(), k_grid: *k_grid, gamma, y0, seed: b.seed() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Holder2DEstimate {
    pub alpha: f64,
    pub eta: f64,
    /// `max |Δγ| / (|Δt|^α + |Δκ|^η)` over distinct pairs of valid cells.
    pub constant: f64,
    /// `((k, j), (k', j'))` attaining the constant.
    pub argmax: Option<([usize; 2], [usize; 2])>,
    pub failed_cells: usize,
}

fn pow_table(step: f64, n: usize, e: f64) -> Vec<f64> {
    (0..n).map(|d| if d == 0 { 0.0 } else { (d as f64 * step).powf(e) }).collect()
}

/// Exact maximization over all pairs of grid cells.
pub fn holder_2d(field: &TraceField, alpha: f64, eta: f64) -> Result<Holder2DEstimate, FieldError> {
    if !(alpha > 0.0 && alpha <= 1.0 && eta > 0.0 && eta <= 1.0) {
        return Err(FieldError::InvalidExponents { alpha, eta });
    }
    let nt = field.t_grid.n_nodes();
    let nk = field.k_grid.n_kappa();
    let tp = pow_table(field.t_grid.dt(), nt, alpha);
    let kp = pow_table(field.k_grid.step(), nk, eta);
    let n = nt * nk;
    let cells = &field.gamma;
    let (constant, argmax) = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut best = (0.0f64, None);
            let Some(ga) = cells[a] else { return best };
            let (ka, ja) = (a / nk, a % nk);
            for b in (a + 1)..n {
                let Some(gb) = cells[b] else { continue };
                let (kb, jb) = (b / nk, b % nk);
                let den = tp[kb - ka] + kp[ja.abs_diff(jb)];
                if den == 0.0 {
                    continue;
                }
                let r = (ga - gb).norm() / den;
                if r > best.0 {
                    best = (r, Some(([ka, ja], [kb, jb])));
                }
            }
            best
        })
        .reduce(|| (0.0, None), |x, y| if y.0 > x.0 { y } else { x });
    Ok(Holder2DEstimate { alpha, eta, constant, argmax, failed_cells: field.failed_cells() })
}
