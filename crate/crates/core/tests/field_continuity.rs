use sle_core::driver::{sample_brownian, scale_driver, TimeGrid};
use sle_core::field::{sample_field, KappaGrid};
use sle_core::loewner::{default_trace_height, trace};

fn sup_gap(seed: u64, delta: f64) -> f64 {
    let grid = TimeGrid::horizon(1.0, 512).unwrap();
    let b = sample_brownian(grid, seed);
    let kg = KappaGrid::new(2.0, 2.0 + delta, 2).unwrap();
    let f = sample_field(&b, &kg, default_trace_height(&grid)).unwrap();
    (0..grid.n_nodes())
        .map(|k| (f.get(k, 0).unwrap() - f.get(k, 1).unwrap()).norm())
        .fold(0.0, f64::max)
}

#[test]
fn kappa_gap_shrinks_as_spacing_halves() {
    let deltas = [0.2, 0.1, 0.05, 0.025];
    let mut mean = [0.0; 4];
    let mut monotone_fields = 0;
    for seed in 0..10 {
        let gaps: Vec<f64> = deltas.iter().map(|&d| sup_gap(300 + seed, d)).collect();
        if gaps.windows(2).all(|w| w[1] < w[0]) {
            monotone_fields += 1;
        }
        for (m, g) in mean.iter_mut().zip(&gaps) {
            *m += g / 10.0;
        }
    }
    assert!(mean.windows(2).all(|w| w[1] < w[0]), "{mean:?}");
    assert!(monotone_fields >= 8, "{monotone_fields} of 10 fields monotone");
}

#[test]
fn columns_share_one_brownian_path() {
    let grid = TimeGrid::horizon(1.0, 128).unwrap();
    let b = sample_brownian(grid, 41);
    let kg = KappaGrid::new(1.5, 2.5, 5).unwrap();
    let y0 = default_trace_height(&grid);
    let f = sample_field(&b, &kg, y0).unwrap();
    for j in 0..kg.n_kappa() {
        let again = sample_brownian(grid, f.seed.unwrap());
        let tr = trace(&scale_driver(&again, kg.node(j)).unwrap(), y0).unwrap();
        let col = f.column(j);
        assert!(col.iter().zip(&tr.gamma).all(|(a, b)| a.unwrap() == *b), "column {j}");
    }
}
