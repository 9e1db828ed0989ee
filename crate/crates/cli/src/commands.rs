use std::fmt;

use num_complex::Complex64;
use serde::Serialize;
use sle_core::driver::{sample_brownian, scale_driver, DriverError, TimeGrid};
use sle_core::exponents::{
    field_exponents, optimal_grr_exponents, summary, trace_regularity, ExponentError, GrrExponentConfig,
};
use sle_core::field::{holder_2d, sample_field, FieldError, KappaGrid, TraceField};
use sle_core::grr::{
    path_norms, sobolev_seminorm, verify_grr, GrrError, GrrKernels, GrrQuadOpts, GrrReport, PathNorms, SampledField2D,
    SampledPath,
};
use sle_core::loewner::{default_trace_height, trace, LoewnerError};
use sle_core::verify::{self, Criterion, VerifyError};
use sle_core::SCHEMA_VERSION;

use crate::cli::*;
use crate::output::Output;

/// Exit 2 for violated preconditions, exit 1 for numerical failures.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

impl From<ExponentError> for Failure {
    fn from(e: ExponentError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<DriverError> for Failure {
    fn from(e: DriverError) -> Self {
        match e {
            DriverError::Io(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<LoewnerError> for Failure {
    fn from(e: LoewnerError) -> Self {
        match e {
            LoewnerError::NotInterior(_) | LoewnerError::InvalidHeight(_) => Failure::Usage(e.to_string()),
            LoewnerError::Driver(d) => d.into(),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<FieldError> for Failure {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::Shape(_) => Failure::Numerical(e.to_string()),
            FieldError::Driver(d) => d.into(),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<GrrError> for Failure {
    fn from(e: GrrError) -> Self {
        match e {
            GrrError::Exponent(x) => x.into(),
            GrrError::Shape(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Invalid(_) => Failure::Usage(e.to_string()),
            VerifyError::Exponent(x) => x.into(),
            VerifyError::Loewner(x) => x.into(),
            VerifyError::Driver(x) => x.into(),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Numerical(format!("{e:#}"))
    }
}

/// What a finished run reports back to `main`.
pub struct Done {
    pub summary: String,
    /// Names of failed criteria; nonempty means exit 1.
    pub failed: Vec<String>,
}

impl Done {
    fn ok(summary: String) -> Self {
        Self { summary, failed: Vec::new() }
    }

    fn from_criteria(summary: String, criteria: &[Criterion]) -> Self {
        let failed = criteria.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect();
        Self { summary, failed }
    }
}

pub struct Ctx<'a> {
    pub out: &'a mut Output,
    pub format: Format,
}

impl Ctx<'_> {
    /// JSON record, plus a CSV table when the format is csv.
    fn emit<T: Serialize>(
        &mut self,
        stem: &str,
        record: &T,
        csv: impl FnOnce(&mut dyn std::io::Write) -> std::io::Result<()>,
    ) -> Result<(), Failure> {
        self.out.write_json(&format!("{stem}.json"), record)?;
        if self.format == Format::Csv {
            self.out.write_with(&format!("{stem}.csv"), csv)?;
        }
        Ok(())
    }
}

fn brownian(t: f64, steps: usize, seed: u64) -> Result<sle_core::driver::DriverPath, Failure> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(usage(format!("t = {t} must be positive")));
    }
    Ok(sample_brownian(TimeGrid::horizon(t, steps)?, seed))
}

pub fn run(cmd: &Cmd, ctx: &mut Ctx) -> Result<Done, Failure> {
    match cmd {
        Cmd::Trace(a) => run_trace(a, ctx),
        Cmd::Field(a) => run_field(a, ctx),
        Cmd::Exponents(a) => run_exponents(a, ctx),
        Cmd::VerifyFprime(a) => run_fprime(a, ctx),
        Cmd::VerifyDiffkappa(a) => run_diffkappa(a, ctx),
        Cmd::VerifyHdiff(a) => run_hdiff(a, ctx),
        Cmd::VerifyBessel(a) => run_bessel(a, ctx),
        Cmd::VerifyReparam(a) => run_reparam(a, ctx),
        Cmd::GrrCheck(a) => run_grr(a, ctx),
        Cmd::Norms(a) => run_norms(a, ctx),
    }
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    schema_version: u32,
    kappa: f64,
    seed: u64,
    t: f64,
    steps: usize,
    y0: f64,
    gamma_end: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<&'a sle_core::loewner::TraceSample>,
}

fn run_trace(a: &TraceArgs, ctx: &mut Ctx) -> Result<Done, Failure> {
    let b = brownian(a.t, a.steps, a.seed)?;
    let d = scale_driver(&b, a.kappa)?;
    let y0 = a.y0.unwrap_or_else(|| default_trace_height(d.grid()));
    let tr = trace(&d, y0)?;
    let end = *tr.gamma.last().unwrap();
    let json = ctx.format == Format::Json;
    let rec = TraceRecord {
        schema_version: SCHEMA_VERSION,
        kappa: a.kappa,
        seed: a.seed,
        t: a.t,
        steps: a.steps,
        y0,
        gamma_end: [end.re, end.im],
        trace: json.then_some(&tr),
    };
    ctx.emit("trace", &rec, |w| tr.write_csv(w))?;
    Ok(Done::ok(format!("gamma({}) = {:.6} + {:.6}i", a.t, end.re, end.im)))
}

#[derive(Serialize)]
struct FieldRecord {
    schema_version: u32,
    metadata: sle_core::field::FieldMetadata,
    holder: Option<sle_core::field::Holder2DEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cells: Option<Vec<Option<[f64; 2]>>>,
}

fn field_holder_exponents(a: &FieldArgs) -> Result<Option<(f64, f64)>, Failure> {
    match (a.alpha, a.eta) {
        (Some(al), Some(et)) => Ok(Some((al, et))),
        (None, None) => {
            if a.kappa_max >= 8.0 / 3.0 {
                return Ok(None);
            }
            if !(a.exponent_fraction > 0.0 && a.exponent_fraction <= 1.0) {
                return Err(usage(format!("exponent-fraction = {} must lie in (0, 1]", a.exponent_fraction)));
            }
            let fe = field_exponents(a.kappa_max, a.epsilon)?;
            Ok(Some((a.exponent_fraction * fe.alpha_opt, a.exponent_fraction * fe.eta_opt)))
        }
        _ => Err(usage("give both --alpha and --eta, or neither")),
    }
}

fn sample_trace_field(
    kappa_min: f64,
    kappa_max: f64,
    n_kappa: usize,
    t: f64,
    steps: usize,
    seed: u64,
    y0: Option<f64>,
) -> Result<TraceField, Failure> {
    let kg = KappaGrid::new(kappa_min, kappa_max, n_kappa)?;
    let b = brownian(t, steps, seed)?;
    let y0 = y0.unwrap_or_else(|| default_trace_height(b.grid()));
    Ok(sample_field(&b, &kg, y0)?)
}

fn run_field(a: &FieldArgs, ctx: &mut Ctx) -> Result<Done, Failure> {
    let exps = field_holder_exponents(a)?;
    let f = sample_trace_field(a.kappa_min, a.kappa_max, a.n_kappa, a.t, a.steps, a.seed, a.y0)?;
    let holder = exps.map(|(al, et)| holder_2d(&f, al, et)).transpose()?;
    let cells = (ctx.format == Format::Json)
        .then(|| (0..f.t_grid.n_nodes()).flat_map(|k| f.column_row(k)).collect::<Vec<_>>());
    let rec = FieldRecord {
        schema_version: SCHEMA_VERSION,
        metadata: f.metadata(),
        holder: holder.clone(),
        cells,
    };
    ctx.emit("field", &rec, |w| f.write_csv(w))?;
    if f.failed_cells() > 0 {
        return Err(Failure::Numerical(format!("{} of {} cells failed", f.failed_cells(), f.n_cells())));
    }
    let s = match holder {
        Some(h) => format!("{} cells; Hölder constant {:.6} at (alpha, eta) = ({:.4}, {:.4})", f.n_cells(), h.constant, h.alpha, h.eta),
        None => format!("{} cells", f.n_cells()),
    };
    Ok(Done::ok(s))
}

trait RowAccess {
    fn column_row(&self, k: usize) -> Vec<Option<[f64; 2]>>;
}

impl RowAccess for TraceField {
    fn column_row(&self, k: usize) -> Vec<Option<[f64; 2]>> {
        (0..self.k_grid.n_kappa()).map(|j| self.get(k, j).map(|g| [g.re, g.im])).collect()
    }
}

fn run_exponents(a: &ExponentsArgs, ctx: &mut Ctx) -> Result<Done, Failure> {
    if !(a.epsilon > 0.0) {
        return Err(usage(format!("epsilon = {} must be positive", a.epsilon)));
    }
    let s = summary(a.kappa, a.r, a.epsilon)?;
    let value = serde_json::json!({ "schema_version": SCHEMA_VERSION, "exponents": &s });
    ctx.out.write_json("exponents.json", &value)?;
    Ok(Done::ok(serde_json::to_string(&value).map_err(anyhow::Error::from)?))
}

fn run_fprime(a: &FprimeArgs, ctx: &mut Ctx) -> Result<Done, Failure> {
    let mut cfg = verify::FprimeConfig::new(a.kappa, a.r, a.t, a.ys.clone(), a.n, a.seed);
    cfg.resolution = a.resolution;
    cfg.estimator = a.estimator;
    cfg.tolerance = a.tolerance;
    let r = verify::check_fprime_moment(&cfg)?;
    ctx.emit("verify-fprime", &r, |w| r.write_points_csv(w))?;
    let s = format!("slope {:.4} ± {:.4} vs zeta {:.4}", r.fit.slope, r.fit.slope_ci_halfwidth, r.zeta);
    Ok(Done::from_criteria(s, &r.criteria))
}

fn run_diffkappa(a: &DiffKappaArgs, ctx: &mut Ctx) -> Result<Done, Failure> {
    let mut cfg = verify::DiffKappaConfig::new(a.kappa, a.kappa_tildes.clone(), a.t, a.delta, a.p, a.n, a.seed);
    cfg.x_offset = a.x_offset;
    cfg.resolution = a.resolution;
    cfg.estimator = a.estimator;
    cfg.tolerance = a.tolerance;
    cfg.delta_sweep = a.delta_sweep.clone();
    cfg.sweep_estimator = a.sweep_estimator;
    cfg.epsilon = a.epsilon;
    let r = verify::check_f_diffkappa(&cfg)?;
    ctx.emit("verify-diffkappa", &r, |w| r.write_points_csv(w))?;
    let mut s = match &r.fit {
        Some(f) => format!("slope {:.4} ± {:.4} (p = {})", f.slope, f.slope_ci_halfwidth, a.p),
        None => "fewer than 3 distinct kappa_tilde; no slope fit".to_string(),
    };
    if let Some(sw) = &r.sweep {
        s.push_str(&format!("; delta-slope {:.4}", sw.fit.slope));
    }
    Ok(Done::from_criteria(s, &r.criteria))
}

fn run_hdiff(a: &HDiffArgs, ctx: &mut Ctx) -> Result<Done, Failure> {
    let mut cfg = verify::HDiffConfig::new(a.kappa, a.kappa_tilde, (a.z_re, a.z_im), a.t, a.n, a.seed);
    cfg.n_steps = a.steps;
    cfg.substeps = a.substeps;
    cfg.slack = a.slack;
    let r = verify::check_h_diff_pathwise(&cfg)?;
    ctx.emit("verify-hdiff", &r, |w| r.write_points_csv(w))?;
    Ok(Done::from_criteria(format!("{} violations of {}, max lhs/rhs {:.4}", r.violations, a.n, r.max_ratio), &r.criteria))
}

fn run_bessel(a: &BesselArgs, ctx: &mut Ctx) -> Result<Done, Failure> {
    let mut cfg = verify::BesselConfig::new(a.kappa, a.kappa_tilde, a.x0, a.t_max, a.n, a.seed);
    cfg.dt = a.dt;
    cfg.refinement = a.refine_dt.map(|d| (d, a.refine_factor));
    let r = verify::bessel_compare(&cfg)?;
    let csv = |w: &mut dyn std::io::Write| -> std::io::Result<()> {
        writeln!(w, "dt,hit_frequency")?;
        writeln!(w, "{:.17e},{:.17e}", a.dt, r.hit_frequency)?;
        if let Some(rf) = &r.refinement {
            writeln!(w, "{:.17e},{:.17e}", rf.coarse_dt, rf.coarse_hit_frequency)?;
            writeln!(w, "{:.17e},{:.17e}", rf.fine_dt, rf.fine_hit_frequency)?;
        }
        Ok(())
    };
    ctx.emit("verify-bessel", &r, csv)?;
    let s = format!("{} ordering violations of {}, hit frequency {:.4}", r.ordering_violations, a.n, r.hit_frequency);
    Ok(Done::from_criteria(s, &r.criteria))
}

fn run_reparam(a: &ReparamArgs, ctx: &mut Ctx) -> Result<Done, Failure> {
    let mut cfg = verify::ReparamConfig::new(a.kappa, a.delta, a.t, a.n, a.seed);
    cfg.n_steps = a.steps;
    cfg.substeps = a.substeps;
    cfg.s_points = a.s_points;
    cfg.ks_threshold = a.ks_threshold;
    let r = verify::reparam_check(&cfg)?;
    ctx.emit("verify-reparam", &r, |w| r.write_points_csv(w))?;
    let p = r.ks_retry.map_or(r.ks.p_value, |k| k.p_value);
    Ok(Done::from_criteria(format!("KS D {:.4}, p {:.4}", r.ks.statistic, p), &r.criteria))
}

fn grr_config(a: &GrrArgs, default: impl FnOnce() -> Result<GrrExponentConfig, Failure>) -> Result<GrrExponentConfig, Failure> {
    match (a.q1, a.q2, a.beta1, a.beta2) {
        (Some(q1), Some(q2), Some(b1), Some(b2)) => Ok(optimal_grr_exponents(&[q1], &[q2], &[b1], &[b2])?),
        (None, None, None, None) => default(),
        _ => Err(usage("give all of --q1 --q2 --beta1 --beta2, or none")),
    }
}

fn run_grr(a: &GrrArgs, ctx: &mut Ctx) -> Result<Done, Failure> {
    if a.outer_order == Some(0) || a.outer_panels == Some(0) {
        return Err(usage("outer-order and outer-panels must be positive"));
    }
    let tune = |mut o: GrrQuadOpts| {
        o.outer_order = a.outer_order.unwrap_or(o.outer_order);
        o.outer_panels = a.outer_panels.unwrap_or(o.outer_panels);
        o
    };
    let report: GrrReport = match a.source {
        GrrSource::TraceField => {
            let seed = a.seed.ok_or_else(|| usage("--seed is required for the trace-field source"))?;
            let config = grr_config(a, || Ok(field_exponents(a.kappa_max, a.epsilon)?.config))?;
            let f = sample_trace_field(a.kappa_min, a.kappa_max, a.n_kappa, a.t, a.steps, seed, None)?;
            if f.failed_cells() > 0 {
                return Err(Failure::Numerical(format!("{} field cells failed", f.failed_cells())));
            }
            let values: Vec<Complex64> = f.gamma_values();
            let g = SampledField2D::new(f.t_grid.nodes().collect(), f.k_grid.nodes(), values)?;
            let kernels = g.increment_kernels();
            let report = verify_grr(&g, &kernels, &config, &tune(GrrQuadOpts::for_grid(&g.x1, &g.x2)))?;
            report
        }
        GrrSource::Linear | GrrSource::Constant => {
            if a.grid < 2 {
                return Err(usage("grid needs at least 2 nodes"));
            }
            let config = grr_config(a, || Ok(optimal_grr_exponents(&[4.0], &[4.0], &[4.0], &[4.0])?))?;
            let axis: Vec<f64> = (0..a.grid).map(|k| k as f64 / (a.grid - 1) as f64).collect();
            let linear = a.source == GrrSource::Linear;
            let g = SampledField2D::from_fn(axis.clone(), axis, |x, y| if linear { x + y } else { 1.0 });
            let kernels = GrrKernels {
                first: vec![Box::new(|u1: f64, v1: f64, _: f64| (u1 - v1).abs())],
                second: vec![Box::new(|_: f64, u2: f64, v2: f64| (u2 - v2).abs())],
            };
            verify_grr(&g, &kernels, &config, &tune(GrrQuadOpts::default()))?
        }
    };
    ctx.out.write_json("grr-check.json", &report)?;
    Ok(Done::ok(format!(
        "M1 = {:?}, M2 = {:?}, empirical constant {:.6} over {} pairs",
        report.m1, report.m2, report.empirical_constant, report.n_pairs
    )))
}

trait GammaValues {
    fn gamma_values(&self) -> Vec<Complex64>;
}

impl GammaValues for TraceField {
    fn gamma_values(&self) -> Vec<Complex64> {
        (0..self.t_grid.n_nodes())
            .flat_map(|k| (0..self.k_grid.n_kappa()).map(move |j| (k, j)))
            .map(|(k, j)| self.get(k, j).expect("checked for failed cells"))
            .collect()
    }
}

#[derive(Serialize)]
struct NormsRecord {
    schema_version: u32,
    over: NormsOver,
    alpha: f64,
    p: f64,
    norms: PathNorms,
    sobolev: Option<SobolevValue>,
}

#[derive(Serialize)]
struct SobolevValue {
    delta: f64,
    q: f64,
    value: f64,
}

fn run_norms(a: &NormsArgs, ctx: &mut Ctx) -> Result<Done, Failure> {
    let check_exps = |alpha: f64, p: f64| -> Result<(), Failure> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(p >= 1.0) {
            return Err(usage(format!("need 0 < alpha <= 1 and p >= 1, got alpha = {alpha}, p = {p}")));
        }
        Ok(())
    };
    let rec = match a.over {
        NormsOver::Time => {
            let reg = trace_regularity(a.kappa)?;
            let alpha = a.alpha.unwrap_or(reg.holder_exponent_bound - a.epsilon);
            let p = a.p.unwrap_or(reg.p_var_exponent + a.epsilon);
            check_exps(alpha, p)?;
            let b = brownian(a.t, a.steps, a.seed)?;
            let d = scale_driver(&b, a.kappa)?;
            let tr = trace(&d, a.y0.unwrap_or_else(|| default_trace_height(d.grid())))?;
            let t: Vec<f64> = d.grid().nodes().collect();
            let norms = path_norms(&t, &tr.gamma, alpha, p)?;
            let path = SampledPath::new(t, tr.gamma.clone())?;
            let value = sobolev_seminorm(&path, a.sobolev_delta, a.sobolev_q)?;
            NormsRecord {
                schema_version: SCHEMA_VERSION,
                over: a.over,
                alpha,
                p,
                norms,
                sobolev: Some(SobolevValue { delta: a.sobolev_delta, q: a.sobolev_q, value }),
            }
        }
        NormsOver::Kappa => {
            let alpha = a.alpha.unwrap_or(0.5);
            let p = a.p.unwrap_or(2.0);
            check_exps(alpha, p)?;
            let f = sample_trace_field(a.kappa_min, a.kappa_max, a.n_kappa, a.t, a.steps, a.seed, a.y0)?;
            if f.failed_cells() > 0 {
                return Err(Failure::Numerical(format!("{} field cells failed", f.failed_cells())));
            }
            let kappas = f.k_grid.nodes();
            let curves: Vec<Vec<Complex64>> =
                (0..kappas.len()).map(|j| f.column(j).into_iter().map(|g| g.expect("checked")).collect()).collect();
            let norms = path_norms(&kappas, &curves, alpha, p)?;
            NormsRecord { schema_version: SCHEMA_VERSION, over: a.over, alpha, p, norms, sobolev: None }
        }
    };
    ctx.out.write_json("norms.json", &rec)?;
    let mut s = format!(
        "Hölder({:.4}) constant {:.6}, {}-variation {:.6}",
        rec.alpha, rec.norms.holder_constant, rec.p, rec.norms.p_variation
    );
    if let Some(sv) = &rec.sobolev {
        s.push_str(&format!(", W^({}, {}) seminorm {:.6}", sv.delta, sv.q, sv.value));
    }
    Ok(Done::ok(s))
}
