use num_complex::Complex64;
use sle_core::verify::*;

#[test]
fn fprime_slope_at_kappa_eight_thirds() {
    let r = check_fprime_moment(&FprimeConfig::new(8.0 / 3.0, 1.0, 1.0, vec![0.4, 0.2, 0.1, 0.05], 10_000, 7)).unwrap();
    assert!((r.zeta - 2.0 / 3.0).abs() < 1e-12);
    assert!(r.passed, "{:?}", r.criteria);
}

#[test]
fn supercritical_delta_sweep_has_negative_slope() {
    let mut cfg = DiffKappaConfig::new(2.0, vec![4.0], 1.0, 0.05, 6.0, 3000, 6);
    cfg.delta_sweep = vec![0.2, 0.1, 0.05];
    let r = check_f_diffkappa(&cfg).unwrap();
    assert!(r.critical_order < 6.0);
    let sweep = r.sweep.as_ref().expect("sweep runs above the critical order");
    assert!(sweep.fit.slope < 0.0, "{:?}", sweep.fit);
    assert!((sweep.predicted_slope - (1.0 + 8.0 / 4.0 - 6.0 - 0.01)).abs() < 1e-12);
}

#[test]
fn h_diff_single_constant_driver() {
    let n = 1000;
    let zero = vec![0.0; n + 1];
    let c = vec![0.1; n + 1];
    let s = h_diff_sides(&zero, &c, 1.0 / n as f64, Complex64::new(0.0, 1.0), 4);
    assert!(s.lhs.is_finite() && s.rhs.is_finite() && s.lhs > 0.0 && s.lhs <= s.rhs, "{s:?}");
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let f = check_fprime_moment(&FprimeConfig::new(2.0, 1.0, 0.25, vec![0.4, 0.2, 0.1], 300, 9)).unwrap();
            let b = bessel_compare(&BesselConfig::new(2.0, 3.0, 1.0, 0.5, 200, 9)).unwrap();
            (serde_json::to_string(&f).unwrap(), serde_json::to_string(&b).unwrap())
        })
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn reports_serialize_with_schema_version() {
    let r = check_h_diff_pathwise(&HDiffConfig::new(2.0, 3.0, (0.0, 1.0), 1.0, 5, 1)).unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    assert_eq!(v["schema_version"], 1);
    let mut csv = Vec::new();
    r.write_points_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 6);
}

#[test]
fn invalid_inputs_rejected() {
    assert!(check_fprime_moment(&FprimeConfig::new(2.0, 1.0, 1.0, vec![0.4, 0.3], 10, 1)).is_err());
    assert!(check_f_diffkappa(&DiffKappaConfig::new(2.0, vec![2.1], 1.0, 1.5, 3.0, 10, 1)).is_err());
    assert!(check_h_diff_pathwise(&HDiffConfig::new(2.0, 3.0, (0.0, 0.0), 1.0, 5, 1)).is_err());
    assert!(bessel_compare(&BesselConfig::new(3.0, 2.0, 1.0, 1.0, 5, 1)).is_err());
    assert!(reparam_check(&ReparamConfig::new(2.0, 0.0, 1.0, 10, 1)).is_err());
}
