//! Exponent calculus for SLE moment bounds and for the mixed-exponent GRR
//! inequality.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default offset used wherever an exponent must sit strictly below a bound.
pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExponentError {
    #[error("kappa must be positive and finite, got {0}")]
    InvalidKappa(f64),
    #[error("r = {r} exceeds the critical value r_c = {r_c}")]
    AboveCritical { r: f64, r_c: f64 },
    #[error("r = {r} sits at the critical value r_c = {r_c}; only allowed in pure calculus")]
    AtCritical { r: f64, r_c: f64 },
    #[error("inadmissible GRR exponents: {0}")]
    Inadmissible(String),
}

fn check_kappa(kappa: f64) -> Result<(), ExponentError> {
    if kappa > 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(ExponentError::InvalidKappa(kappa))
    }
}

/// `r_c(κ) = 1/2 + 4/κ`.
pub fn critical_r(kappa: f64) -> Result<f64, ExponentError> {
    check_kappa(kappa)?;
    Ok(0.5 + 4.0 / kappa)
}

/// κ with the moment exponents `λ(κ, r)` and `ζ(κ, r)` at `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SleExponentParams {
    pub kappa: f64,
    pub r: f64,
    pub r_c: f64,
    pub lambda: f64,
    pub zeta: f64,
    /// `r == r_c`: valid for calculus, refused by Monte Carlo checks.
    pub at_critical: bool,
}

impl SleExponentParams {
    /// Fails if the parameters sit at the critical boundary.
    pub fn require_subcritical(&self) -> Result<(), ExponentError> {
        if self.at_critical {
            Err(ExponentError::AtCritical { r: self.r, r_c: self.r_c })
        } else {
            Ok(())
        }
    }
}

pub fn lambda_of(kappa: f64, r: f64) -> f64 {
    r * (1.0 + kappa / 4.0) - kappa * r * r / 8.0
}

pub fn zeta_of(kappa: f64, r: f64) -> f64 {
    r - kappa * r * r / 8.0
}

/// `λ(r) = r(1+κ/4) - κr²/8`, `ζ(r) = r - κr²/8`; `r > r_c` is rejected and
/// `r = r_c` (to 1e-12 relative) is returned flagged.
pub fn lambda_zeta(kappa: f64, r: f64) -> Result<SleExponentParams, ExponentError> {
    let r_c = critical_r(kappa)?;
    let at_critical = (r - r_c).abs() <= 1e-12 * r_c;
    if r > r_c && !at_critical {
        return Err(ExponentError::AboveCritical { r, r_c });
    }
    Ok(SleExponentParams { kappa, r, r_c, lambda: lambda_of(kappa, r), zeta: zeta_of(kappa, r), at_critical })
}

/// `2/[(κ/4)(1/2+4/κ)²] + 1/(1+8/κ) - 1`; negative exactly when κ < 8/3.
pub fn continuity_condition(kappa: f64) -> Result<f64, ExponentError> {
    check_kappa(kappa)?;
    let peak = kappa / 4.0 * (0.5 + 4.0 / kappa).powi(2);
    Ok(2.0 / peak + 1.0 / (1.0 + 8.0 / kappa) - 1.0)
}

/// p-variation and Hölder exponents of the trace for a given κ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRegularity {
    pub p_var_exponent: f64,
    pub holder_exponent_bound: f64,
}

pub fn trace_regularity(kappa: f64) -> Result<TraceRegularity, ExponentError> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(ExponentError::InvalidKappa(kappa));
    }
    let p_var_exponent = (1.0 + kappa / 8.0).min(2.0);
    let holder = 1.0 - kappa / (24.0 + 2.0 * kappa - 8.0 * (8.0 + kappa).sqrt());
    Ok(TraceRegularity { p_var_exponent, holder_exponent_bound: holder.min(0.5) })
}

/// Exponents `(q_ij, β_ij)`, the free parameters `a, b`, and the Hölder
/// exponents they produce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrrExponentConfig {
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub a: f64,
    pub b: f64,
    /// `γ^(1)_{1j}`, `γ^(2)_{1j}`
    pub gamma1_first: Vec<f64>,
    pub gamma2_first: Vec<f64>,
    /// `γ^(1)_{2j}`, `γ^(2)_{2j}`
    pub gamma1_second: Vec<f64>,
    pub gamma2_second: Vec<f64>,
}

fn min_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl GrrExponentConfig {
    /// Config with an explicit choice of `a, b`; exponents follow from the GRR bound.
    pub fn with_ab(q1: Vec<f64>, q2: Vec<f64>, beta1: Vec<f64>, beta2: Vec<f64>, a: f64, b: f64) -> Result<Self, ExponentError> {
        check_admissible(&q1, &q2, &beta1, &beta2)?;
        if !(a >= 0.0 && b >= 0.0) {
            return Err(ExponentError::Inadmissible(format!("a = {a}, b = {b} must be nonnegative")));
        }
        let gamma1_first = q1.iter().zip(&beta1).map(|(q, bt)| (bt - 2.0 - b) / q).collect();
        let gamma2_first = q1.iter().zip(&beta1).map(|(q, bt)| ((bt - 2.0) * a - 1.0) / q).collect();
        let gamma1_second = q2.iter().zip(&beta2).map(|(q, bt)| ((bt - 2.0) * b - 1.0) / q).collect();
        let gamma2_second = q2.iter().zip(&beta2).map(|(q, bt)| (bt - 2.0 - a) / q).collect();
        Ok(Self { q1, q2, beta1, beta2, a, b, gamma1_first, gamma2_first, gamma1_second, gamma2_second })
    }

    /// 1-D family: `γ_j = (β_j - 2)/q_j`, no second variable.
    pub fn one_dimensional(q: Vec<f64>, beta: Vec<f64>) -> Result<Self, ExponentError> {
        if q.len() != beta.len() || q.is_empty() {
            return Err(ExponentError::Inadmissible("q and beta must be nonempty and of equal length".into()));
        }
        if let Some(q) = q.iter().find(|&&q| !(q >= 1.0)) {
            return Err(ExponentError::Inadmissible(format!("q = {q} < 1")));
        }
        if let Some(b) = beta.iter().find(|&&b| !(b > 2.0)) {
            return Err(ExponentError::Inadmissible(format!("beta = {b} <= 2")));
        }
        let gamma1_first = q.iter().zip(&beta).map(|(q, b)| (b - 2.0) / q).collect();
        Ok(Self {
            gamma2_first: vec![],
            q1: q,
            q2: vec![],
            beta1: beta,
            beta2: vec![],
            a: 0.0,
            b: 0.0,
            gamma1_first,
            gamma1_second: vec![],
            gamma2_second: vec![],
        })
    }

    /// Overall exponent in the first variable, `min_{ij} γ^(1)_{ij}`.
    pub fn gamma1(&self) -> f64 {
        min_of(&self.gamma1_first).min(min_of(&self.gamma1_second))
    }

    /// Overall exponent in the second variable, `min_{ij} γ^(2)_{ij}`.
    pub fn gamma2(&self) -> f64 {
        min_of(&self.gamma2_first).min(min_of(&self.gamma2_second))
    }
}

/// `q ≥ 1`, `β_i = min_j β_ij > 2`, `(β_1-2)(β_2-2) > 1`.
pub fn check_admissible(q1: &[f64], q2: &[f64], beta1: &[f64], beta2: &[f64]) -> Result<(), ExponentError> {
    if q1.is_empty() || q2.is_empty() || q1.len() != beta1.len() || q2.len() != beta2.len() {
        return Err(ExponentError::Inadmissible("each family needs matching nonempty q and beta lists".into()));
    }
    if let Some(q) = q1.iter().chain(q2).find(|&&q| !(q >= 1.0)) {
        return Err(ExponentError::Inadmissible(format!("q_ij >= 1 violated by q = {q}")));
    }
    let (b1, b2) = (min_of(beta1), min_of(beta2));
    if !(b1 > 2.0) {
        return Err(ExponentError::Inadmissible(format!("beta_1 = min_j beta_1j = {b1} must exceed 2")));
    }
    if !(b2 > 2.0) {
        return Err(ExponentError::Inadmissible(format!("beta_2 = min_j beta_2j = {b2} must exceed 2")));
    }
    let prod = (b1 - 2.0) * (b2 - 2.0);
    if !(prod > 1.0) {
        return Err(ExponentError::Inadmissible(format!("(beta_1-2)(beta_2-2) = {prod} must exceed 1")));
    }
    Ok(())
}

/// Balanced choice of `a, b`.
///
/// When every `β_1j` equals `β_1` and every `β_2j` equals `β_2` the closed
/// form `a = (q_1(β_2-2)+q_2)/(q_2(β_1-2)+q_1)`, `b = 1/a` is used with
/// `q_i = max_j q_ij`. Otherwise `a = (β_2-1)/(β_1-1)`, `b = 1/a`, which is
/// admissible but not necessarily optimal; see [`refine_ab`].
pub fn optimal_grr_exponents(q1: &[f64], q2: &[f64], beta1: &[f64], beta2: &[f64]) -> Result<GrrExponentConfig, ExponentError> {
    check_admissible(q1, q2, beta1, beta2)?;
    let (b1, b2) = (min_of(beta1), min_of(beta2));
    let equal_beta = beta1.iter().all(|&b| b == b1) && beta2.iter().all(|&b| b == b2);
    let (a, b) = if equal_beta {
        let (qm1, qm2) = (max_of(q1), max_of(q2));
        let a = (qm1 * (b2 - 2.0) + qm2) / (qm2 * (b1 - 2.0) + qm1);
        (a, 1.0 / a)
    } else {
        ((b2 - 1.0) / (b1 - 1.0), (b1 - 1.0) / (b2 - 1.0))
    };
    GrrExponentConfig::with_ab(q1.to_vec(), q2.to_vec(), beta1.to_vec(), beta2.to_vec(), a, b)
}

/// Closed-form overall exponents in the equal-β case.
pub fn equal_beta_exponents(q1: f64, q2: f64, beta1: f64, beta2: f64) -> (f64, f64) {
    let num = (beta1 - 2.0) * (beta2 - 2.0) - 1.0;
    (num / (q1 * (beta2 - 2.0) + q2), num / (q2 * (beta1 - 2.0) + q1))
}

/// Numerical search over `(a, b)` maximising `min(γ^(1), γ^(2))`, started
/// from [`optimal_grr_exponents`]. Log-grid scan followed by a shrinking
/// pattern search.
pub fn refine_ab(q1: &[f64], q2: &[f64], beta1: &[f64], beta2: &[f64]) -> Result<GrrExponentConfig, ExponentError> {
    let start = optimal_grr_exponents(q1, q2, beta1, beta2)?;
    let score = |a: f64, b: f64| -> f64 {
        match GrrExponentConfig::with_ab(q1.to_vec(), q2.to_vec(), beta1.to_vec(), beta2.to_vec(), a, b) {
            Ok(c) => c.gamma1().min(c.gamma2()),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let mut best = (start.a.ln(), start.b.ln());
    let mut best_score = score(start.a, start.b);
    for i in -40..=40 {
        for j in -40..=40 {
            let (la, lb) = (i as f64 * 0.1, j as f64 * 0.1);
            let s = score(la.exp(), lb.exp());
            if s > best_score {
                best_score = s;
                best = (la, lb);
            }
        }
    }
    let mut step = 0.1;
    while step > 1e-10 {
        let mut improved = false;
        for (da, db) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step), (step, step), (-step, -step), (step, -step), (-step, step)] {
            let cand = (best.0 + da, best.1 + db);
            let s = score(cand.0.exp(), cand.1.exp());
            if s > best_score {
                best_score = s;
                best = cand;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    GrrExponentConfig::with_ab(q1.to_vec(), q2.to_vec(), beta1.to_vec(), beta2.to_vec(), best.0.exp(), best.1.exp())
}

/// Exponents for checking joint Hölder regularity of `γ(t, κ)` on
/// `[κ₋, κ₊]`: `r = r_c - ε`, `p = 1 + 8/κ₊ - ε`,
/// `β_1 = (ζ+λ)/2 + 1 - ε`, `β_2 = p + 1 - ε`, all at `κ₊`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldExponents {
    pub params: SleExponentParams,
    pub p: f64,
    pub config: GrrExponentConfig,
    /// `γ^(1)` and `γ^(2)` of the balanced config.
    pub alpha_opt: f64,
    pub eta_opt: f64,
}

pub fn field_exponents(kappa_plus: f64, epsilon: f64) -> Result<FieldExponents, ExponentError> {
    let r_c = critical_r(kappa_plus)?;
    let params = lambda_zeta(kappa_plus, r_c - epsilon)?;
    let p = 1.0 + 8.0 / kappa_plus - epsilon;
    let beta1 = (params.zeta + params.lambda) / 2.0 + 1.0 - epsilon;
    let beta2 = p + 1.0 - epsilon;
    let q1 = params.lambda.max(1.0);
    let config = optimal_grr_exponents(&[q1], &[p], &[beta1], &[beta2])?;
    let (alpha_opt, eta_opt) = (config.gamma1(), config.gamma2());
    Ok(FieldExponents { params, p, config, alpha_opt, eta_opt })
}

/// Every derived quantity for one κ (and optionally r), as emitted by the
/// `exponents` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentSummary {
    pub kappa: f64,
    pub r_c: f64,
    pub lambda_at_r_c: f64,
    pub continuity_condition: f64,
    pub continuity_holds: bool,
    pub p_var_exponent: f64,
    pub holder_exponent_bound: f64,
    pub critical_moment_order: f64,
    pub epsilon: f64,
    pub at_r: Option<SleExponentParams>,
    pub field: Option<FieldExponents>,
}

pub fn summary(kappa: f64, r: Option<f64>, epsilon: f64) -> Result<ExponentSummary, ExponentError> {
    let r_c = critical_r(kappa)?;
    let cond = continuity_condition(kappa)?;
    let reg = trace_regularity(kappa)?;
    let at_r = r.map(|r| lambda_zeta(kappa, r)).transpose()?;
    Ok(ExponentSummary {
        kappa,
        r_c,
        lambda_at_r_c: lambda_of(kappa, r_c),
        continuity_condition: cond,
        continuity_holds: cond < 0.0,
        p_var_exponent: reg.p_var_exponent,
        holder_exponent_bound: reg.holder_exponent_bound,
        critical_moment_order: 1.0 + 8.0 / kappa,
        epsilon,
        at_r,
        field: field_exponents(kappa, epsilon).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn critical_r_values() {
        assert_eq!(critical_r(8.0).unwrap(), 1.0);
        assert_eq!(critical_r(2.0).unwrap(), 2.5);
        assert!((critical_r(8.0 / 3.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(critical_r(0.0).is_err());
        assert!(critical_r(-1.0).is_err());
    }

    #[test]
    fn lambda_zeta_values() {
        let p = lambda_zeta(2.0, 2.5).unwrap();
        assert!(p.at_critical);
        assert!((p.lambda - 2.1875).abs() < 1e-14);
        assert!((p.zeta - 0.9375).abs() < 1e-14);
        assert!((p.lambda - (1.0 + 2.0 / 2.0 + 3.0 * 2.0 / 32.0)).abs() < 1e-14);
        assert!(p.require_subcritical().is_err());

        let z = lambda_zeta(2.0, 0.0).unwrap();
        assert_eq!((z.lambda, z.zeta), (0.0, 0.0));

        let q = lambda_zeta(8.0 / 3.0, 1.0).unwrap();
        assert!((q.lambda - 4.0 / 3.0).abs() < 1e-14);
        assert!((q.zeta - 2.0 / 3.0).abs() < 1e-14);
        assert!(!q.at_critical);

        assert!(matches!(lambda_zeta(2.0, 2.6), Err(ExponentError::AboveCritical { .. })));
    }

    #[test]
    fn continuity_condition_values() {
        assert!(continuity_condition(8.0 / 3.0).unwrap().abs() < 1e-12);
        assert!((continuity_condition(2.0).unwrap() + 0.16).abs() < 1e-12);
        let c3 = continuity_condition(3.0).unwrap();
        assert!((c3 - 0.0661).abs() < 5e-5, "{c3}");
    }

    #[test]
    fn trace_regularity_values() {
        assert_eq!(trace_regularity(2.0).unwrap().p_var_exponent, 1.25);
        assert_eq!(trace_regularity(16.0).unwrap().p_var_exponent, 2.0);
        let small = trace_regularity(1e-9).unwrap();
        assert!((small.holder_exponent_bound - 0.5).abs() < 1e-12);
        assert_eq!(trace_regularity(0.0).unwrap().holder_exponent_bound, 0.5);
    }

    #[test]
    fn grr_exponents_examples() {
        let c = optimal_grr_exponents(&[4.0], &[4.0], &[4.0], &[4.0]).unwrap();
        assert!((c.a - 1.0).abs() < 1e-15 && (c.b - 1.0).abs() < 1e-15);
        assert!((c.gamma1() - 0.25).abs() < 1e-15);
        assert!((c.gamma2() - 0.25).abs() < 1e-15);

        let c = optimal_grr_exponents(&[2.0], &[4.0], &[4.0], &[5.0]).unwrap();
        assert!((c.a - 1.0).abs() < 1e-15 && (c.b - 1.0).abs() < 1e-15);
        assert!((c.gamma1() - 0.5).abs() < 1e-15);
        assert!((c.gamma2() - 0.5).abs() < 1e-15);

        match optimal_grr_exponents(&[2.0], &[2.0], &[2.5], &[2.5]) {
            Err(ExponentError::Inadmissible(msg)) => assert!(msg.contains("(beta_1-2)(beta_2-2) = 0.25"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn general_case_matches_remark_formulas() {
        let (q1, q2) = (vec![2.0, 3.0], vec![4.0, 1.5]);
        let (b1, b2) = (vec![4.0, 5.0], vec![3.5, 6.0]);
        let c = optimal_grr_exponents(&q1, &q2, &b1, &b2).unwrap();
        let (bm1, bm2) = (4.0, 3.5);
        for j in 0..2 {
            let n1 = (b1[j] - 2.0) * (bm2 - 2.0) - 1.0 + b1[j] - bm1;
            assert!((c.gamma1_first[j] - n1 / (q1[j] * (bm2 - 1.0))).abs() < 1e-14);
            assert!((c.gamma2_first[j] - n1 / (q1[j] * (bm1 - 1.0))).abs() < 1e-14);
            let n2 = (bm1 - 2.0) * (b2[j] - 2.0) - 1.0 + b2[j] - bm2;
            assert!((c.gamma1_second[j] - n2 / (q2[j] * (bm2 - 1.0))).abs() < 1e-14);
            assert!((c.gamma2_second[j] - n2 / (q2[j] * (bm1 - 1.0))).abs() < 1e-14);
        }
        let r = refine_ab(&q1, &q2, &b1, &b2).unwrap();
        assert!(r.gamma1().min(r.gamma2()) >= c.gamma1().min(c.gamma2()) - 1e-12);
    }

    #[test]
    fn field_exponents_are_admissible_below_eight_thirds() {
        let f = field_exponents(2.5, DEFAULT_EPSILON).unwrap();
        assert!(f.alpha_opt > 0.0 && f.eta_opt > 0.0);
        assert!(field_exponents(3.0, DEFAULT_EPSILON).is_err());
    }

    proptest! {
        #[test]
        fn zeta_plus_lambda_identity(kappa in 0.1f64..20.0, frac in -2.0f64..1.0) {
            let r = frac * critical_r(kappa).unwrap();
            let p = lambda_zeta(kappa, r).unwrap();
            let rhs = kappa / 4.0 * r * (1.0 + 8.0 / kappa - r);
            prop_assert!((p.zeta + p.lambda - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            if r > 0.0 {
                prop_assert!(p.zeta < p.lambda);
            }
        }

        #[test]
        fn symmetric_equal_beta_gives_unit_ab(q in 1.0f64..10.0, beta in 3.01f64..12.0) {
            let c = optimal_grr_exponents(&[q], &[q], &[beta], &[beta]).unwrap();
            prop_assert!((c.a - 1.0).abs() < 1e-14);
            prop_assert!((c.b - 1.0).abs() < 1e-14);
        }

        #[test]
        fn equal_beta_balancing(
            q1 in proptest::collection::vec(1.0f64..8.0, 1..4),
            q2 in proptest::collection::vec(1.0f64..8.0, 1..4),
            b1 in 2.2f64..8.0,
            b2 in 2.2f64..8.0,
        ) {
            prop_assume!((b1 - 2.0) * (b2 - 2.0) > 1.05);
            let beta1 = vec![b1; q1.len()];
            let beta2 = vec![b2; q2.len()];
            let c = optimal_grr_exponents(&q1, &q2, &beta1, &beta2).unwrap();
            let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!((min(&c.gamma1_first) - min(&c.gamma1_second)).abs() < 1e-12);
            prop_assert!((min(&c.gamma2_first) - min(&c.gamma2_second)).abs() < 1e-12);
            let qm1 = q1.iter().copied().fold(0.0, f64::max);
            let qm2 = q2.iter().copied().fold(0.0, f64::max);
            let (g1, g2) = equal_beta_exponents(qm1, qm2, b1, b2);
            prop_assert!((c.gamma1() - g1).abs() < 1e-12);
            prop_assert!((c.gamma2() - g2).abs() < 1e-12);
        }
    }
}
