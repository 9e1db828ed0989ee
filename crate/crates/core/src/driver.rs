//! Brownian driving functions on uniform time grids.

use std::io::{self, BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{substream, SampleRng, REFINE_STREAM};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("degenerate time grid: t1 = {t1} must exceed t0 = {t0}")]
    DegenerateGrid { t0: f64, t1: f64 },
    #[error("time grid needs at least one step")]
    NoSteps,
    #[error("driver has {got} values but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("path is already scaled (kappa = {0}); scale an unscaled path instead")]
    AlreadyScaled(f64),
    #[error("kappa must be a finite nonnegative number, got {0}")]
    InvalidKappa(f64),
    #[error("refinement factor must be at least 1")]
    InvalidFactor,
    #[error("time {0} is not a node of the grid")]
    NotANode(f64),
    #[error("malformed driver CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Uniform grid `t_k = t0 + k (t1 - t0) / n_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n_steps: usize) -> Result<Self, DriverError> {
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(DriverError::DegenerateGrid { t0, t1 });
        }
        if n_steps == 0 {
            return Err(DriverError::NoSteps);
        }
        Ok(Self { t0, t1, n_steps })
    }

    /// `[0, t1]` with `n_steps` steps.
    pub fn horizon(t1: f64, n_steps: usize) -> Result<Self, DriverError> {
        Self::new(0.0, t1, n_steps)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.n_steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.node(k))
    }

    /// Index of `t` if it lies on the grid (relative tolerance 1e-9 of a step).
    pub fn index_of(&self, t: f64) -> Result<usize, DriverError> {
        let x = (t - self.t0) / self.dt();
        let k = x.round();
        if !(k >= 0.0 && k <= self.n_steps as f64 && (x - k).abs() <= 1e-9 * x.abs().max(1.0)) {
            return Err(DriverError::NotANode(t));
        }
        Ok(k as usize)
    }

    /// Grid with `factor` times as many steps over the same interval.
    pub fn refined(&self, factor: usize) -> Self {
        Self { n_steps: self.n_steps * factor, ..*self }
    }
}

/// A sampled driving function `U` on a [`TimeGrid`].
///
/// `kappa == 0` marks a raw standard Brownian path; after [`scale_driver`]
/// the tag records the `kappa` for which `values = sqrt(kappa) * B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverPath {
    grid: TimeGrid,
    values: Vec<f64>,
    kappa: f64,
    seed: Option<u64>,
}

impl DriverPath {
    /// Deterministic driver given by its node values. No `values[0] = 0`
    /// requirement, so shifted constant drivers can be expressed.
    pub fn from_values(grid: TimeGrid, values: Vec<f64>) -> Result<Self, DriverError> {
        if values.len() != grid.n_nodes() {
            return Err(DriverError::LengthMismatch { expected: grid.n_nodes(), got: values.len() });
        }
        Ok(Self { grid, values, kappa: 0.0, seed: None })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values, kappa: 0.0, seed: None }
    }

    pub fn zero(grid: TimeGrid) -> Self {
        Self::from_fn(grid, |_| 0.0)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn is_scaled(&self) -> bool {
        self.kappa != 0.0
    }

    pub fn value_at_node(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Driver value at grid time `t`.
    pub fn value_at(&self, t: f64) -> Result<f64, DriverError> {
        Ok(self.values[self.grid.index_of(t)?])
    }

    /// Linear interpolation between nodes, clamped to the grid.
    pub fn interpolate(&self, t: f64) -> f64 {
        let x = ((t - self.grid.t0) / self.grid.dt()).clamp(0.0, self.grid.n_steps as f64);
        let k = (x.floor() as usize).min(self.grid.n_steps - 1);
        let w = x - k as f64;
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    /// Rescaled copy `lambda * U(. / lambda^2)` on `[t0 lambda^2, t1 lambda^2]`.
    pub fn brownian_rescaled(&self, lambda: f64) -> Self {
        let l2 = lambda * lambda;
        let grid = TimeGrid { t0: self.grid.t0 * l2, t1: self.grid.t1 * l2, n_steps: self.grid.n_steps };
        Self { grid, values: self.values.iter().map(|v| lambda * v).collect(), kappa: self.kappa, seed: self.seed }
    }

    /// Writes `t,U` rows after a `# kappa=..,seed=..` header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        match self.seed {
            Some(s) => writeln!(out, "# kappa={},seed={}", self.kappa, s)?,
            None => writeln!(out, "# kappa={},seed=none", self.kappa)?,
        }
        writeln!(out, "t,U")?;
        for (t, u) in self.grid.nodes().zip(&self.values) {
            writeln!(out, "{t:.17e},{u:.17e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, DriverError> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| DriverError::Csv("empty input".into()))??;
        let meta = header
            .strip_prefix("# ")
            .ok_or_else(|| DriverError::Csv("missing metadata header".into()))?;
        let mut kappa = 0.0;
        let mut seed = None;
        for field in meta.split(',') {
            let (k, v) = field.split_once('=').ok_or_else(|| DriverError::Csv(format!("bad field {field}")))?;
            match k.trim() {
                "kappa" => kappa = v.trim().parse().map_err(|_| DriverError::Csv(format!("bad kappa {v}")))?,
                "seed" if v.trim() == "none" => seed = None,
                "seed" => seed = Some(v.trim().parse().map_err(|_| DriverError::Csv(format!("bad seed {v}")))?),
                other => return Err(DriverError::Csv(format!("unknown header key {other}"))),
            }
        }
        match lines.next() {
            Some(Ok(l)) if l.trim() == "t,U" => {}
            _ => return Err(DriverError::Csv("missing column header t,U".into())),
        }
        let mut ts = Vec::new();
        let mut us = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (t, u) = line.split_once(',').ok_or_else(|| DriverError::Csv(format!("bad row {line}")))?;
            ts.push(t.trim().parse::<f64>().map_err(|_| DriverError::Csv(format!("bad t {t}")))?);
            us.push(u.trim().parse::<f64>().map_err(|_| DriverError::Csv(format!("bad U {u}")))?);
        }
        if ts.len() < 2 {
            return Err(DriverError::Csv("need at least two rows".into()));
        }
        let grid = TimeGrid::new(ts[0], *ts.last().unwrap(), ts.len() - 1)?;
        Ok(Self { grid, values: us, kappa, seed })
    }
}

fn brownian_from_rng(grid: TimeGrid, rng: &mut SampleRng) -> Vec<f64> {
    let sd = grid.dt().sqrt();
    let mut values = Vec::with_capacity(grid.n_nodes());
    let mut b = 0.0;
    values.push(b);
    for _ in 0..grid.n_steps {
        let z: f64 = rng.sample(StandardNormal);
        b += sd * z;
        values.push(b);
    }
    values
}

/// Standard Brownian path on `grid`, drawn from stream 0 of `seed`.
pub fn sample_brownian(grid: TimeGrid, seed: u64) -> DriverPath {
    sample_brownian_stream(grid, seed, 0)
}

/// Brownian path drawn from substream `stream` of `seed`; Monte Carlo
/// sample `i` uses stream `i`.
pub fn sample_brownian_stream(grid: TimeGrid, seed: u64, stream: u64) -> DriverPath {
    let mut rng = substream(seed, stream);
    DriverPath { grid, values: brownian_from_rng(grid, &mut rng), kappa: 0.0, seed: Some(seed) }
}

/// `sqrt(kappa) * B` pointwise.
pub fn scale_driver(path: &DriverPath, kappa: f64) -> Result<DriverPath, DriverError> {
    if path.is_scaled() {
        return Err(DriverError::AlreadyScaled(path.kappa));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(DriverError::InvalidKappa(kappa));
    }
    let s = kappa.sqrt();
    Ok(DriverPath {
        grid: path.grid,
        values: path.values.iter().map(|b| s * b).collect(),
        kappa,
        seed: path.seed,
    })
}

/// Brownian-bridge refinement: `factor` sub-steps per step, original nodes kept.
pub fn refine(path: &DriverPath, factor: usize, seed: u64) -> Result<DriverPath, DriverError> {
    if factor == 0 {
        return Err(DriverError::InvalidFactor);
    }
    if path.is_scaled() {
        return Err(DriverError::AlreadyScaled(path.kappa));
    }
    if factor == 1 {
        return Ok(path.clone());
    }
    let grid = path.grid.refined(factor);
    let h = grid.dt();
    let coarse_dt = path.grid.dt();
    let mut rng = substream(seed, REFINE_STREAM);
    let mut values = Vec::with_capacity(grid.n_nodes());
    for w in path.values.windows(2) {
        let (start, end) = (w[0], w[1]);
        values.push(start);
        let mut x = start;
        for j in 1..factor {
            // remaining time to the right endpoint from the previous point
            let rem = coarse_dt - (j - 1) as f64 * h;
            let mean = x + (end - x) * h / rem;
            let var = h * (rem - h) / rem;
            let z: f64 = rng.sample(StandardNormal);
            x = mean + var.sqrt() * z;
            values.push(x);
        }
    }
    values.push(*path.values.last().unwrap());
    Ok(DriverPath { grid, values, kappa: 0.0, seed: path.seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes_are_exact_at_ends() {
        let g = TimeGrid::new(0.0, 0.7, 3).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(3), 0.7);
        let nodes: Vec<f64> = g.nodes().collect();
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g.index_of(0.7).unwrap(), 3);
        assert!(g.index_of(0.1).is_err());
    }

    #[test]
    fn degenerate_grid_rejected() {
        assert!(matches!(TimeGrid::new(1.0, 1.0, 4), Err(DriverError::DegenerateGrid { .. })));
        assert!(matches!(TimeGrid::new(1.0, 0.5, 4), Err(DriverError::DegenerateGrid { .. })));
        assert!(matches!(TimeGrid::new(0.0, 1.0, 0), Err(DriverError::NoSteps)));
    }

    #[test]
    fn brownian_starts_at_zero_and_is_deterministic() {
        let g = TimeGrid::horizon(1.0, 4).unwrap();
        let a = sample_brownian(g, 42);
        assert_eq!(a.values()[0], 0.0);
        assert_eq!(a.values().len(), 5);
        assert_eq!(a.kappa(), 0.0);
        let b = sample_brownian(g, 42);
        assert_eq!(a, b);
        assert_ne!(a, sample_brownian(g, 43));
    }

    #[test]
    fn scaling_cases() {
        let g = TimeGrid::horizon(1.0, 64).unwrap();
        let b = sample_brownian(g, 1);
        let zero = scale_driver(&b, 0.0).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        let four = scale_driver(&b, 4.0).unwrap();
        for (x, y) in four.values().iter().zip(b.values()) {
            assert_eq!(*x, 2.0 * y);
        }
        let two = scale_driver(&b, 2.0).unwrap();
        for (x, y) in two.values().iter().zip(b.values()) {
            assert_eq!(*x, 2f64.sqrt() * y);
            assert!((x / 2f64.sqrt() - y).abs() <= 4.0 * f64::EPSILON * y.abs());
        }
        assert!(matches!(scale_driver(&two, 3.0), Err(DriverError::AlreadyScaled(_))));
        assert!(scale_driver(&b, -1.0).is_err());
    }

    #[test]
    fn refine_identity_and_pins() {
        let g = TimeGrid::horizon(1.0, 8).unwrap();
        let b = sample_brownian(g, 5);
        assert_eq!(refine(&b, 1, 9).unwrap(), b);
        let r = refine(&b, 4, 9).unwrap();
        assert_eq!(r.grid().n_steps(), 32);
        for k in 0..=8 {
            assert_eq!(r.values()[4 * k], b.values()[k]);
        }
        assert_eq!(refine(&b, 4, 9).unwrap(), r);
        assert!(refine(&b, 0, 9).is_err());
        assert!(refine(&scale_driver(&b, 2.0).unwrap(), 2, 9).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = TimeGrid::horizon(1.0, 5).unwrap();
        let b = scale_driver(&sample_brownian(g, 11), 2.5).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# kappa=2.5,seed=11\nt,U\n"));
        let back = DriverPath::read_csv(&buf[..]).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn interpolation_hits_nodes() {
        let g = TimeGrid::horizon(2.0, 4).unwrap();
        let d = DriverPath::from_fn(g, |t| t * t);
        assert_eq!(d.interpolate(1.0), 1.0);
        assert!((d.interpolate(0.75) - 0.5 * (0.25 + 1.0)).abs() < 1e-15);
        assert_eq!(d.interpolate(5.0), 4.0);
    }
}
