//! Chordal Loewner flows driven by piecewise-constant drivers.
//!
//! On each grid step `(t_{k-1}, t_k]` the driver is frozen at `U(t_k)`, so
//! `g_t` is an exact composition of vertical-slit maps
//! `w -> U_k + sqrt((w - U_k)^2 + 4 dt)` and `f̂_t = g_t^{-1}(. + U(t))` is the
//! reverse composition of their inverses. The adaptive RK4 reverse-flow
//! integrator solves the same flow independently and is used as a cross-check.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{DriverError, DriverPath, TimeGrid};
use crate::quad::gauss_legendre;

/// Relative tolerance on the squared distance to the singularity below which
/// a point counts as swallowed.
pub const SWALLOW_TOL: f64 = 1e-12;
/// Relative tolerance of the adaptive reverse-flow integrator.
pub const ODE_RTOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum LoewnerError {
    #[error("point swallowed at time {time} (image {image})")]
    Swallowed { time: f64, image: Complex64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("branch selection failed at step {step}: image {value} left the upper half-plane")]
    Branch { step: usize, value: Complex64 },
    #[error("reverse flow step size underflow at s = {s} (step {step_size:e}); start point too close to the real line")]
    Resolution { s: f64, step_size: f64 },
    #[error("quadrature did not converge: {coarse} vs {fine}")]
    Quadrature { coarse: f64, fine: f64 },
    #[error("point {0} is not in the open upper half-plane")]
    NotInterior(Complex64),
    #[error("height must be positive, got {0}")]
    InvalidHeight(f64),
    #[error(transparent)]
    Driver(#[from] DriverError),
}

/// A point `re + i im` of the closed upper half-plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlanePoint {
    pub re: f64,
    pub im: f64,
}

impl HalfPlanePoint {
    pub fn new(re: f64, im: f64) -> Result<Self, LoewnerError> {
        if !(im >= 0.0) || !re.is_finite() || !im.is_finite() {
            return Err(LoewnerError::NotInterior(Complex64::new(re, im)));
        }
        Ok(Self { re, im })
    }

    /// A point of the open half-plane.
    pub fn interior(re: f64, im: f64) -> Result<Self, LoewnerError> {
        if !(im > 0.0) {
            return Err(LoewnerError::NotInterior(Complex64::new(re, im)));
        }
        Self::new(re, im)
    }

    pub fn imag_axis(y: f64) -> Result<Self, LoewnerError> {
        Self::interior(0.0, y)
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    fn from_complex(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }

    fn require_interior(self) -> Result<Complex64, LoewnerError> {
        if self.im > 0.0 {
            Ok(self.to_complex())
        } else {
            Err(LoewnerError::NotInterior(self.to_complex()))
        }
    }
}

impl From<HalfPlanePoint> for Complex64 {
    fn from(p: HalfPlanePoint) -> Self {
        p.to_complex()
    }
}

/// Square root with nonnegative imaginary part.
#[inline]
pub fn sqrt_upper(w: Complex64) -> Complex64 {
    sqrt_upper_with_norm(w).0
}

/// [`sqrt_upper`] together with `|w|`.
#[inline(always)]
fn sqrt_upper_with_norm(w: Complex64) -> (Complex64, f64) {
    let (a, b) = (w.re, w.im);
    if a == 0.0 && b == 0.0 {
        return (Complex64::new(0.0, 0.0), 0.0);
    }
    let r = (a * a + b * b).sqrt();
    let s = (0.5 * (r + a.abs())).sqrt();
    let q = b / (2.0 * s);
    let root = if a >= 0.0 { Complex64::new(s, q) } else { Complex64::new(q.abs(), s.copysign(b)) };
    if root.im < 0.0 || (root.im == 0.0 && root.re < 0.0) {
        (-root, r)
    } else {
        (root, r)
    }
}

/// Steps between logarithms when accumulating derivative ratios.
const LOG_CHUNK: usize = 16;

/// One inverse slit map `z ↦ u + sqrt((z-u)² - 4Δt)`; also returns
/// `|f'|² = |z-u|² / |(z-u)² - 4Δt|`.
#[inline(always)]
fn inverse_step(z: Complex64, u: f64, four_dt: f64) -> (Complex64, f64) {
    let d = z - u;
    let (s, r) = sqrt_upper_with_norm(d * d - four_dt);
    (u + s, d.norm_sqr() / r)
}

/// Elementary-map parameters of a driver: step size and the frozen driver
/// value on each step.
#[derive(Clone, Debug)]
pub struct SlitMapSequence {
    t0: f64,
    dt: f64,
    u0: f64,
    tips: Vec<f64>,
}

impl SlitMapSequence {
    pub fn new(driver: &DriverPath) -> Self {
        let v = driver.values();
        Self { t0: driver.grid().t0(), dt: driver.grid().dt(), u0: v[0], tips: v[1..].to_vec() }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.tips.len()
    }

    /// Driver value at node `k`.
    pub fn driver_at(&self, k: usize) -> f64 {
        if k == 0 {
            self.u0
        } else {
            self.tips[k - 1]
        }
    }

    /// `g_{t_k}(z)` by composing the first `k` slit maps.
    pub fn forward(&self, z: Complex64, k: usize) -> Result<Complex64, LoewnerError> {
        let four_dt = 4.0 * self.dt;
        let mut w = z;
        for (j, &u) in self.tips[..k].iter().enumerate() {
            let d = w - u;
            let d2 = d * d;
            let arg = d2 + four_dt;
            if arg.norm() <= SWALLOW_TOL * (d2.norm() + four_dt) {
                return Err(LoewnerError::Swallowed {
                    time: self.t0 + (j + 1) as f64 * self.dt,
                    image: Complex64::new(u, 0.0) + sqrt_upper(arg),
                });
            }
            w = u + sqrt_upper(arg);
            if !w.re.is_finite() || !w.im.is_finite() {
                return Err(LoewnerError::Numerical(format!("non-finite forward image at step {}", j + 1)));
            }
            if w.im <= 0.0 {
                return Err(LoewnerError::Swallowed { time: self.t0 + (j + 1) as f64 * self.dt, image: w });
            }
        }
        Ok(w)
    }

    /// `f̂_{t_k}(w)` together with `log |f̂_{t_k}'(w)|`.
    pub fn inverse_with_log_derivative(&self, w: Complex64, k: usize) -> Result<(Complex64, f64), LoewnerError> {
        let four_dt = 4.0 * self.dt;
        let mut z = w + self.driver_at(k);
        let mut log_der = 0.0;
        let mut prod = 1.0;
        for (j, &u) in self.tips[..k].iter().enumerate().rev() {
            let (next, ratio) = inverse_step(z, u, four_dt);
            if next.im < 0.0 {
                return Err(LoewnerError::Branch { step: j + 1, value: next - u });
            }
            z = next;
            prod *= ratio;
            if j % LOG_CHUNK == 0 {
                log_der += 0.5 * prod.ln();
                prod = 1.0;
            }
        }
        log_der += 0.5 * prod.ln();
        if !z.re.is_finite() || !z.im.is_finite() || !log_der.is_finite() {
            return Err(LoewnerError::Numerical(format!("non-finite inverse image {z} (log|f'| = {log_der})")));
        }
        Ok((z, log_der))
    }

    pub fn inverse(&self, w: Complex64, k: usize) -> Result<Complex64, LoewnerError> {
        self.inverse_with_log_derivative(w, k).map(|(z, _)| z)
    }

    /// Same as [`Self::inverse_with_log_derivative`] for several points at once;
    /// one pass over the driver.
    pub fn inverse_many(&self, ws: &[Complex64], k: usize) -> Result<Vec<(Complex64, f64)>, LoewnerError> {
        let four_dt = 4.0 * self.dt;
        let shift = self.driver_at(k);
        let mut zs: Vec<Complex64> = ws.iter().map(|w| w + shift).collect();
        let mut logs = vec![0.0; ws.len()];
        let mut prods = vec![1.0; ws.len()];
        for (j, &u) in self.tips[..k].iter().enumerate().rev() {
            for (z, p) in zs.iter_mut().zip(prods.iter_mut()) {
                let (next, ratio) = inverse_step(*z, u, four_dt);
                *z = next;
                *p *= ratio;
            }
            if j % LOG_CHUNK == 0 {
                for (l, p) in logs.iter_mut().zip(prods.iter_mut()) {
                    *l += 0.5 * p.ln();
                    *p = 1.0;
                }
            }
        }
        let out: Vec<(Complex64, f64)> =
            zs.into_iter().zip(logs.into_iter().zip(prods)).map(|(z, (l, p))| (z, l + 0.5 * p.ln())).collect();
        if out.iter().any(|(z, l)| !z.re.is_finite() || !z.im.is_finite() || !l.is_finite()) {
            return Err(LoewnerError::Numerical("non-finite inverse image".into()));
        }
        Ok(out)
    }
}

/// `g_t(z)` for a grid time `t`.
pub fn forward_map(driver: &DriverPath, t: f64, z: HalfPlanePoint) -> Result<HalfPlanePoint, LoewnerError> {
    let k = driver.grid().index_of(t)?;
    let z = z.require_interior()?;
    SlitMapSequence::new(driver).forward(z, k).map(HalfPlanePoint::from_complex)
}

/// `f̂_t(w) = g_t^{-1}(w + U(t))` for a grid time `t`.
pub fn inverse_map(driver: &DriverPath, t: f64, w: HalfPlanePoint) -> Result<HalfPlanePoint, LoewnerError> {
    let k = driver.grid().index_of(t)?;
    let w = w.require_interior()?;
    SlitMapSequence::new(driver).inverse(w, k).map(HalfPlanePoint::from_complex)
}

/// Samples of the reverse flow `z_s = h_s(z) - V(s)` at the grid nodes of
/// `[0, t]`, with `V(s) = U(t - s) - U(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReverseFlowPath {
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `log |h_s'(z)|`
    pub log_deriv: Vec<f64>,
    /// `V(s)` at each node.
    pub v: Vec<f64>,
}

impl ReverseFlowPath {
    fn with_capacity(n: usize) -> Self {
        Self {
            s: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            log_deriv: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, s: f64, z: Complex64, log_deriv: f64, v: f64) {
        self.s.push(s);
        self.x.push(z.re);
        self.y.push(z.im);
        self.log_deriv.push(log_deriv);
        self.v.push(v);
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn z(&self, j: usize) -> Complex64 {
        Complex64::new(self.x[j], self.y[j])
    }

    /// `h_s(z) = z_s + V(s)` at the last node.
    pub fn terminal_h(&self) -> Complex64 {
        let j = self.len() - 1;
        self.z(j) + self.v[j]
    }

    pub fn terminal_log_deriv(&self) -> f64 {
        *self.log_deriv.last().unwrap()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "s,x,y,log_abs_hprime")?;
        for j in 0..self.len() {
            writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e}", self.s[j], self.x[j], self.y[j], self.log_deriv[j])?;
        }
        Ok(())
    }
}

/// Reverse-time drivers `V` on each reverse step, given the grid index of `t`.
/// Step `m` (from `s_{m-1}` to `s_m`) uses `V(s_{m-1}) = U(t_{k-m+1}) - U(t_k)`.
fn reverse_driver(seq: &SlitMapSequence, k: usize) -> Vec<f64> {
    let ut = seq.driver_at(k);
    (0..=k).map(|j| seq.driver_at(k - j) - ut).collect()
}

fn flow_rhs(h: Complex64, v: f64) -> (Complex64, f64) {
    let d = h - v;
    let inv = d.inv();
    (-2.0 * inv, 2.0 * (inv * inv).re)
}

fn rk4_step(h: Complex64, l: f64, v: f64, dt: f64) -> (Complex64, f64) {
    let (k1, m1) = flow_rhs(h, v);
    let (k2, m2) = flow_rhs(h + 0.5 * dt * k1, v);
    let (k3, m3) = flow_rhs(h + 0.5 * dt * k2, v);
    let (k4, m4) = flow_rhs(h + dt * k3, v);
    (h + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), l + dt / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4))
}

/// Integrates `dh/ds = -2 / (h - V)` with `V` constant over `[0, span]`,
/// RK4 with step doubling at relative tolerance [`ODE_RTOL`].
fn integrate_constant_driver(
    mut h: Complex64,
    mut l: f64,
    v: f64,
    span: f64,
    s_start: f64,
) -> Result<(Complex64, f64), LoewnerError> {
    let mut s = 0.0;
    // initial guess from the local time scale |h - V|^2
    let mut step = (0.1 * (h - v).norm_sqr()).min(span);
    let min_step = 1e-15 * span.max(1e-300);
    while s < span {
        if span - s < step {
            step = span - s;
        }
        let (h_full, l_full) = rk4_step(h, l, v, step);
        let (h_half, l_half) = rk4_step(h, l, v, 0.5 * step);
        let (h_two, l_two) = rk4_step(h_half, l_half, v, 0.5 * step);
        let err_h = (h_two - h_full).norm() / 15.0;
        let err_l = (l_two - l_full).abs() / 15.0;
        let scale_h = ODE_RTOL * h_two.norm().max((h - v).norm()) + 1e-14;
        let scale_l = ODE_RTOL * l_two.abs().max(1.0);
        let ratio = (err_h / scale_h).max(err_l / scale_l);
        if !ratio.is_finite() {
            return Err(LoewnerError::Numerical(format!("non-finite reverse-flow state at s = {}", s_start + s)));
        }
        if ratio <= 1.0 {
            s += step;
            // local extrapolation
            h = h_two + (h_two - h_full) / 15.0;
            l = l_two + (l_two - l_full) / 15.0;
            let grow = if ratio == 0.0 { 4.0 } else { (0.9 * ratio.powf(-0.2)).min(4.0) };
            step *= grow;
        } else {
            step *= (0.9 * ratio.powf(-0.25)).max(0.1);
            if step < min_step {
                return Err(LoewnerError::Resolution { s: s_start + s, step_size: step });
            }
        }
    }
    Ok((h, l))
}

/// Reverse flow from `z` up to grid time `t`, by adaptive RK4.
pub fn reverse_flow(driver: &DriverPath, t: f64, z: HalfPlanePoint) -> Result<ReverseFlowPath, LoewnerError> {
    let k = driver.grid().index_of(t)?;
    let z = z.require_interior()?;
    let seq = SlitMapSequence::new(driver);
    let vs = reverse_driver(&seq, k);
    let dt = seq.dt();
    let mut path = ReverseFlowPath::with_capacity(k + 1);
    let mut h = z;
    let mut l = 0.0;
    path.push(0.0, h - vs[0], 0.0, vs[0]);
    for m in 1..=k {
        let v = vs[m - 1];
        let s0 = (m - 1) as f64 * dt;
        let (h1, l1) = integrate_constant_driver(h, l, v, dt, s0)?;
        h = h1;
        l = l1;
        path.push(m as f64 * dt, h - vs[m], l, vs[m]);
    }
    Ok(path)
}

/// Reverse flow from exact inverse slit maps, with `substeps` equal
/// sub-steps per driver step (the map for a constant driver composes exactly).
pub fn reverse_flow_exact(
    driver: &DriverPath,
    t: f64,
    z: HalfPlanePoint,
    substeps: usize,
) -> Result<ReverseFlowPath, LoewnerError> {
    let k = driver.grid().index_of(t)?;
    let z = z.require_interior()?;
    let seq = SlitMapSequence::new(driver);
    Ok(reverse_flow_from_drivers(&reverse_driver(&seq, k), seq.dt(), z, substeps, 2.0))
}

/// Reverse flow `dh/ds = -rate / (h - V)` with `V` frozen at `v[m]` on step
/// `[m ds, (m+1) ds)`; `v` has one entry per node, the last only recorded.
pub fn reverse_flow_from_drivers(
    v: &[f64],
    ds: f64,
    z: Complex64,
    substeps: usize,
    rate: f64,
) -> ReverseFlowPath {
    let substeps = substeps.max(1);
    let k = v.len() - 1;
    let h_sub = ds / substeps as f64;
    let shrink = 2.0 * rate * h_sub;
    let mut path = ReverseFlowPath::with_capacity(k * substeps + 1);
    let mut h = z;
    let mut l = 0.0;
    path.push(0.0, h - v[0], 0.0, v[0]);
    for m in 0..k {
        let vm = v[m];
        for q in 1..=substeps {
            let d = h - vm;
            let s = sqrt_upper(d * d - shrink);
            l += d.norm().ln() - s.norm().ln();
            h = vm + s;
            let s_now = m as f64 * ds + q as f64 * h_sub;
            if q == substeps {
                path.push(s_now, h - v[m + 1], l, v[m + 1]);
            } else {
                path.push(s_now, h - vm, l, vm);
            }
        }
    }
    path
}

/// `|f̂_t'(z)|` accumulated along the RK4 reverse flow.
pub fn derivative_modulus(driver: &DriverPath, t: f64, z: HalfPlanePoint) -> Result<f64, LoewnerError> {
    Ok(reverse_flow(driver, t, z)?.terminal_log_deriv().exp())
}

/// Approximate trace `γ(t_k) ≈ f̂_{t_k}(i y0)` on every node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub grid: TimeGrid,
    pub gamma: Vec<Complex64>,
    pub y0: f64,
}

impl TraceSample {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,re_gamma,im_gamma")?;
        for (t, g) in self.grid.nodes().zip(&self.gamma) {
            writeln!(out, "{t:.17e},{:.17e},{:.17e}", g.re, g.im)?;
        }
        Ok(())
    }
}

/// Default approximation height: one driver step in the space scale.
pub fn default_trace_height(grid: &TimeGrid) -> f64 {
    grid.dt().sqrt()
}

pub fn trace(driver: &DriverPath, y0: f64) -> Result<TraceSample, LoewnerError> {
    if !(y0 > 0.0) {
        return Err(LoewnerError::InvalidHeight(y0));
    }
    let seq = SlitMapSequence::new(driver);
    let n = seq.n_steps();
    let w = Complex64::new(0.0, y0);
    let mut gamma: Vec<Complex64> =
        (0..=n).into_par_iter().map(|k| seq.inverse(w, k)).collect::<Result<_, _>>()?;
    gamma[0] = Complex64::new(0.0, 0.0);
    Ok(TraceSample { grid: *driver.grid(), gamma, y0 })
}

const V_OCTAVES: usize = 40;
const V_RTOL: f64 = 1e-6;

/// `v(t, y) = ∫_0^y |f̂_t'(iu)| du` on geometrically graded panels
/// `[y 2^{-m-1}, y 2^{-m}]`, with the last band closed by a fitted power law.
pub fn v_integral(driver: &DriverPath, t: f64, y: f64) -> Result<f64, LoewnerError> {
    if !(y > 0.0) {
        return Err(LoewnerError::InvalidHeight(y));
    }
    let k = driver.grid().index_of(t)?;
    let seq = SlitMapSequence::new(driver);
    let integrand = |u: f64| -> Result<f64, LoewnerError> {
        Ok(seq.inverse_with_log_derivative(Complex64::new(0.0, u), k)?.1.exp())
    };
    let graded = |order: usize| -> Result<f64, LoewnerError> {
        let (nodes, weights) = gauss_legendre(order);
        let mut total = 0.0;
        let mut hi = y;
        for _ in 0..V_OCTAVES {
            let lo = 0.5 * hi;
            let (mid, half) = (0.5 * (hi + lo), 0.5 * (hi - lo));
            for (x, w) in nodes.iter().zip(&weights) {
                total += w * half * integrand(mid + half * x)?;
            }
            hi = lo;
        }
        // tail on [0, hi] from the local power law g(u) ~ c u^e
        let g1 = integrand(hi)?;
        let g2 = integrand(0.5 * hi)?;
        if g1 > 0.0 && g2 > 0.0 {
            let e = (g1 / g2).log2();
            if e > -1.0 {
                total += g1 * hi / (e + 1.0);
            } else {
                return Err(LoewnerError::Quadrature { coarse: total, fine: f64::INFINITY });
            }
        }
        Ok(total)
    };
    let coarse = graded(8)?;
    let fine = graded(16)?;
    if (coarse - fine).abs() > V_RTOL * fine.abs() + 1e-14 {
        return Err(LoewnerError::Quadrature { coarse, fine });
    }
    Ok(fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{sample_brownian, scale_driver};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit_zero(n: usize) -> DriverPath {
        DriverPath::zero(TimeGrid::horizon(1.0, n).unwrap())
    }

    #[test]
    fn sqrt_upper_matches_principal_up_to_sign() {
        for &(a, b) in &[(1.0, 2.0), (-3.0, 0.5), (-3.0, -0.5), (2.0, -1.0), (-4.0, 0.0), (4.0, 0.0), (0.0, -2.0)] {
            let w = c(a, b);
            let s = sqrt_upper(w);
            assert!(s.im >= 0.0);
            assert!((s * s - w).norm() < 1e-14 * w.norm().max(1.0), "{w} -> {s}");
        }
        assert_eq!(sqrt_upper(c(-4.0, 0.0)), c(0.0, 2.0));
        assert_eq!(sqrt_upper(c(-4.0, -0.0)), c(0.0, 2.0));
    }

    #[test]
    fn zero_driver_forward_closed_form() {
        let d = unit_zero(64);
        let g = forward_map(&d, 1.0, HalfPlanePoint::interior(1.0, 1.0).unwrap()).unwrap();
        assert!((g.re - 2.058_171_0).abs() < 1e-7);
        assert!((g.im - 0.485_868_3).abs() < 1e-7);
    }

    #[test]
    fn constant_driver_forward_closed_form() {
        let grid = TimeGrid::horizon(1.0, 64).unwrap();
        let d = DriverPath::from_fn(grid, |_| 1.0);
        let g = forward_map(&d, 1.0, HalfPlanePoint::interior(2.0, 1.0).unwrap()).unwrap();
        assert!((g.re - 3.058_171_0).abs() < 1e-7);
        assert!((g.im - 0.485_868_3).abs() < 1e-7);
    }

    #[test]
    fn swallowed_point_is_flagged() {
        for n in [1, 16, 1024] {
            let d = unit_zero(n);
            match forward_map(&d, 1.0, HalfPlanePoint::imag_axis(2.0).unwrap()) {
                Err(LoewnerError::Swallowed { time, image }) => {
                    assert!((time - 1.0).abs() < 1e-12, "n = {n}, time = {time}");
                    assert!(image.norm() < 1e-6);
                }
                other => panic!("expected swallow for n = {n}, got {other:?}"),
            }
        }
    }

    #[test]
    fn zero_driver_inverse_and_reverse_closed_forms() {
        let d = unit_zero(32);
        let f = inverse_map(&d, 1.0, HalfPlanePoint::imag_axis(1.0).unwrap()).unwrap();
        assert!(f.re.abs() < 1e-14);
        assert!((f.im - 5f64.sqrt()).abs() < 1e-12);
        let p = reverse_flow(&d, 1.0, HalfPlanePoint::imag_axis(2.0).unwrap()).unwrap();
        let h = p.terminal_h();
        assert!((h.im - 8f64.sqrt()).abs() < 1e-7);
        assert!(p.x.iter().all(|x| x.abs() < 1e-12));
        assert!(p.y.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn derivative_modulus_closed_form() {
        let d = unit_zero(16);
        let m = derivative_modulus(&d, 1.0, HalfPlanePoint::imag_axis(1.0).unwrap()).unwrap();
        assert!((m - 1.0 / 5f64.sqrt()).abs() < 1e-7);
        let seq = SlitMapSequence::new(&d);
        let (_, l) = seq.inverse_with_log_derivative(c(0.0, 1.0), 16).unwrap();
        assert!((l.exp() - 1.0 / 5f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn far_point_has_unit_derivative() {
        let b = scale_driver(&sample_brownian(TimeGrid::horizon(1.0, 128).unwrap(), 3), 4.0).unwrap();
        let m = derivative_modulus(&b, 1.0, HalfPlanePoint::imag_axis(1000.0).unwrap()).unwrap();
        assert!((m - 1.0).abs() < 1e-2);
    }

    #[test]
    fn round_trip_on_brownian_driver() {
        let b = scale_driver(&sample_brownian(TimeGrid::horizon(1.0, 256).unwrap(), 8), 3.0).unwrap();
        let w = HalfPlanePoint::interior(0.3, 0.2).unwrap();
        let z = inverse_map(&b, 1.0, w).unwrap();
        let back = forward_map(&b, 1.0, z).unwrap();
        // g_t(f̂_t(w)) = w + U(t)
        let ut = b.value_at(1.0).unwrap();
        assert!((back.to_complex() - w.to_complex() - ut).norm() < 1e-6);
    }

    #[test]
    fn exact_reverse_flow_matches_inverse_map() {
        let b = scale_driver(&sample_brownian(TimeGrid::horizon(1.0, 200).unwrap(), 12), 2.0).unwrap();
        let w = HalfPlanePoint::interior(-0.1, 0.3).unwrap();
        let f = inverse_map(&b, 1.0, w).unwrap().to_complex();
        for sub in [1, 3] {
            let p = reverse_flow_exact(&b, 1.0, w, sub).unwrap();
            let ut = b.values()[200];
            assert!((p.terminal_h() + ut - f).norm() < 1e-12);
            assert_eq!(p.len(), 200 * sub + 1);
        }
    }

    #[test]
    fn trace_of_zero_driver() {
        let d = unit_zero(256);
        let y0 = default_trace_height(d.grid());
        let tr = trace(&d, y0).unwrap();
        assert_eq!(tr.gamma[0], c(0.0, 0.0));
        assert!((tr.gamma[256] - c(0.0, 2.0)).norm() < 2.0 * y0);
        assert!(tr.gamma.iter().all(|g| g.im >= 0.0));
    }

    #[test]
    fn v_integral_zero_driver() {
        let d = unit_zero(64);
        let v = v_integral(&d, 1.0, 0.1).unwrap();
        assert!((v - (0.01f64 + 4.0).sqrt() + 2.0).abs() < 1e-9);
        assert!((v - 0.002_498_4).abs() < 1e-7);
        assert!(v_integral(&d, 1.0, 1e-6).unwrap() < 1e-4);
        assert!(v_integral(&d, 1.0, 0.2).unwrap() >= v);
        assert!(matches!(v_integral(&d, 1.0, 0.0), Err(LoewnerError::InvalidHeight(_))));
    }

    #[test]
    fn rejects_boundary_and_off_grid_inputs() {
        let d = unit_zero(4);
        assert!(HalfPlanePoint::interior(0.0, 0.0).is_err());
        assert!(HalfPlanePoint::new(0.0, -1.0).is_err());
        let p = HalfPlanePoint::new(1.0, 0.0).unwrap();
        assert!(matches!(forward_map(&d, 1.0, p), Err(LoewnerError::NotInterior(_))));
        let q = HalfPlanePoint::imag_axis(1.0).unwrap();
        assert!(matches!(inverse_map(&d, 0.3, q), Err(LoewnerError::Driver(_))));
    }
}
