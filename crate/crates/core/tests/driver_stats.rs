use proptest::prelude::*;
use sle_core::driver::{refine, sample_brownian, scale_driver, DriverPath, TimeGrid};
use sle_core::stats::{mean, sample_sd};

const SEEDS: u64 = 10_000;

#[test]
fn terminal_variance_over_seeds() {
    let grid = TimeGrid::horizon(1.0, 16).unwrap();
    let b1: Vec<f64> = (0..SEEDS).map(|s| *sample_brownian(grid, s).values().last().unwrap()).collect();
    let var = sample_sd(&b1).powi(2);
    // sd of the sample variance of N(0,1) is sqrt(2/(n-1))
    let se = (2.0 / (SEEDS - 1) as f64).sqrt();
    assert!((var - 1.0).abs() < 3.0 * se, "var {var}, se {se}");
    assert!(mean(&b1).abs() < 3.0 / (SEEDS as f64).sqrt());
}

#[test]
fn half_interval_increments_uncorrelated() {
    let grid = TimeGrid::horizon(1.0, 2).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for s in 0..SEEDS {
        let v = sample_brownian(grid, s).values().to_vec();
        a.push(v[1] - v[0]);
        b.push(v[2] - v[1]);
    }
    let (ma, mb) = (mean(&a), mean(&b));
    let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (SEEDS - 1) as f64;
    let corr = cov / (sample_sd(&a) * sample_sd(&b));
    assert!(corr.abs() < 3.0 / (SEEDS as f64).sqrt(), "corr {corr}");
}

#[test]
fn bridge_midpoint_residual_variance() {
    let grid = TimeGrid::horizon(1.0, 1).unwrap();
    let dt = grid.dt();
    let res: Vec<f64> = (0..SEEDS)
        .map(|s| {
            let b = sample_brownian(grid, s);
            let f = refine(&b, 2, s + 1_000_000).unwrap();
            let v = f.values();
            v[1] - 0.5 * (v[0] + v[2])
        })
        .collect();
    let var = sample_sd(&res).powi(2);
    let target = dt / 4.0;
    let se = target * (2.0 / (SEEDS - 1) as f64).sqrt();
    assert!((var - target).abs() < 3.0 * se, "var {var} vs {target}");
}

#[test]
fn scaling_examples() {
    let grid = TimeGrid::horizon(1.0, 64).unwrap();
    let b = sample_brownian(grid, 3);
    assert!(scale_driver(&b, 0.0).unwrap().values().iter().all(|&v| v == 0.0));
    let four = scale_driver(&b, 4.0).unwrap();
    assert!(four.values().iter().zip(b.values()).all(|(u, v)| *u == 2.0 * v));
    let two = scale_driver(&b, 2.0).unwrap();
    let r2 = 2f64.sqrt();
    assert!(two.values().iter().zip(b.values()).all(|(u, v)| *u == r2 * v));
    assert!(scale_driver(&two, 2.0).is_err());
}

#[test]
fn csv_round_trip() {
    let grid = TimeGrid::horizon(2.0, 10).unwrap();
    let b = scale_driver(&sample_brownian(grid, 11), 3.0).unwrap();
    let mut buf = Vec::new();
    b.write_csv(&mut buf).unwrap();
    let back = DriverPath::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.values(), b.values());
    assert_eq!(back.kappa(), 3.0);
    assert_eq!(back.seed(), Some(11));
}

proptest! {
    #[test]
    fn refinement_pins_coarse_nodes(seed in any::<u64>(), n in 1usize..40, factor in 1usize..6) {
        let grid = TimeGrid::horizon(1.0, n).unwrap();
        let b = sample_brownian(grid, seed);
        let f = refine(&b, factor, seed ^ 0xABCD).unwrap();
        prop_assert_eq!(f.grid().n_steps(), n * factor);
        for k in 0..=n {
            prop_assert_eq!(f.values()[k * factor], b.values()[k]);
        }
        prop_assert_eq!(f.values()[0], 0.0);
    }

    #[test]
    fn scaling_inverts(seed in any::<u64>(), kappa in 0.01f64..10.0) {
        let grid = TimeGrid::horizon(1.0, 32).unwrap();
        let b = sample_brownian(grid, seed);
        let s = scale_driver(&b, kappa).unwrap();
        let r = kappa.sqrt();
        for (u, v) in s.values().iter().zip(b.values()) {
            prop_assert!((u / r - v).abs() <= 1e-15 * v.abs().max(1.0));
        }
    }

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>(), n in 1usize..64) {
        let grid = TimeGrid::horizon(1.0, n).unwrap();
        let (a, b) = (sample_brownian(grid, seed), sample_brownian(grid, seed));
        prop_assert_eq!(a.values(), b.values());
    }
}
