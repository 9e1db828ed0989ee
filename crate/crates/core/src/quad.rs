//! Quadrature helpers: Gauss-Legendre rules, compensated sums, and a
//! diagonal-singular double integral on a square.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("integral diverges at the diagonal (local exponent {exponent:.4} <= -1)")]
    Divergent { exponent: f64 },
    #[error("quadrature not converged: {coarse} vs {fine}")]
    NotConverged { coarse: f64, fine: f64 },
    #[error("integrand returned a non-finite value")]
    NonFinite,
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            nodes[0] = 0.0;
            weights[0] = 2.0;
            break;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Neumaier-compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().collect::<CompensatedSum>().value()
}

/// Composite Gauss-Legendre rule on `[a, b]`.
#[derive(Clone, Debug)]
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let width = (b - a) / panels as f64;
        let mut acc = CompensatedSum::default();
        for p in 0..panels {
            let lo = a + p as f64 * width;
            let mid = lo + 0.5 * width;
            let half = 0.5 * width;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                acc.add(w * half * f(mid + half * x));
            }
        }
        acc.value()
    }
}

/// Settings for [`singular_square`].
#[derive(Clone, Copy, Debug)]
pub struct SingularOpts {
    /// Gauss-Legendre order per panel.
    pub order: usize,
    /// Panels for the integral along the diagonal direction.
    pub inner_panels: usize,
    /// Number of dyadic octaves in the distance to the diagonal before the
    /// power-law closure.
    pub octaves: usize,
    /// Panel width cap in the distance variable (e.g. a sampling step).
    pub resolution: f64,
    /// Relative agreement required between a rule and its refinement.
    pub rtol: f64,
}

impl Default for SingularOpts {
    fn default() -> Self {
        Self { order: 8, inner_panels: 4, octaves: 40, resolution: f64::INFINITY, rtol: 1e-3 }
    }
}

impl SingularOpts {
    fn refined(self) -> Self {
        Self {
            order: self.order + 4,
            inner_panels: self.inner_panels * 2,
            octaves: self.octaves + 10,
            ..self
        }
    }
}

fn singular_square_once(f: &dyn Fn(f64, f64) -> f64, a: f64, b: f64, opts: SingularOpts) -> Result<f64, QuadError> {
    let len = b - a;
    let rule = Rule::new(opts.order);
    // g(h) = ∫ [f(v+h, v) + f(v, v+h)] dv over v in [a, b-h]
    let g = |h: f64| -> f64 {
        let panels = if opts.resolution.is_finite() {
            (((len - h) / opts.resolution).ceil() as usize).clamp(opts.inner_panels, 4096)
        } else {
            opts.inner_panels
        };
        rule.integrate(a, b - h, panels, |v| f(v + h, v) + f(v, v + h))
    };
    let mut total = CompensatedSum::default();
    let mut hi = len;
    for _ in 0..opts.octaves {
        let lo = 0.5 * hi;
        let sub = if opts.resolution.is_finite() {
            (((hi - lo) / opts.resolution).ceil() as usize).clamp(1, 1024)
        } else {
            1
        };
        let part = rule.integrate(lo, hi, sub, g);
        if !part.is_finite() {
            return Err(QuadError::NonFinite);
        }
        total.add(part);
        hi = lo;
    }
    // closure on [0, hi] with g(h) ~ c h^e
    let g1 = g(hi);
    let g2 = g(0.5 * hi);
    if !g1.is_finite() || !g2.is_finite() {
        return Err(QuadError::NonFinite);
    }
    if g1 > 0.0 && g2 > 0.0 {
        let e = (g1 / g2).log2();
        if e <= -1.0 + 1e-6 {
            return Err(QuadError::Divergent { exponent: e });
        }
        total.add(g1 * hi / (e + 1.0));
    }
    Ok(total.value())
}

/// `∬_{[a,b]^2} f(u, v) du dv` for integrands that may blow up (integrably)
/// on the diagonal `u = v`. The distance to the diagonal is integrated on
/// dyadic octaves and the innermost band by its fitted local power law.
pub fn singular_square(f: &dyn Fn(f64, f64) -> f64, a: f64, b: f64, opts: SingularOpts) -> Result<f64, QuadError> {
    let coarse = singular_square_once(f, a, b, opts)?;
    let fine = singular_square_once(f, a, b, opts.refined())?;
    if (coarse - fine).abs() > opts.rtol * fine.abs().max(1e-300) && (coarse - fine).abs() > 1e-12 {
        return Err(QuadError::NotConverged { coarse, fine });
    }
    Ok(fine)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 3, 5, 8, 16] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            // degree 2n-1 monomial with even power
            let deg = 2 * n - 2;
            let exact = 2.0 / (deg + 1) as f64;
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((approx - exact).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn singular_square_known_integrals() {
        // ∬ |u-v|^{-1/2} = 8/3
        let v = singular_square(&|u, v| (u - v).abs().powf(-0.5), 0.0, 1.0, SingularOpts::default()).unwrap();
        assert!((v - 8.0 / 3.0).abs() < 1e-6, "{v}");
        let one = singular_square(&|_, _| 1.0, 0.0, 2.0, SingularOpts::default()).unwrap();
        assert!((one - 4.0).abs() < 1e-10);
    }

    #[test]
    fn singular_square_flags_divergence() {
        let r = singular_square(&|u, v| (u - v).abs().powf(-1.5), 0.0, 1.0, SingularOpts::default());
        assert!(matches!(r, Err(QuadError::Divergent { .. })), "{r:?}");
    }
}
