use proptest::prelude::*;

use selfprop_core::config::parse_config;
use selfprop_core::exec::{self, Execution};
use selfprop_core::experiment::simulate;
use selfprop_core::geometry::{extract_contour, radius_from_area};
use selfprop_core::grid::{laplacian, Grid};
use selfprop_core::init::disk_profile;
use selfprop_core::output::read_series;
use selfprop_core::ScalarField;

fn field(n: usize, values: Vec<f64>) -> ScalarField {
    ScalarField::new(&Grid::unit(2, n).unwrap(), values).unwrap()
}

fn shift(f: &ScalarField, dx: usize, dy: usize) -> ScalarField {
    let g = f.grid();
    let n = g.dims()[0];
    let mut out = vec![0.0; g.len()];
    for j in 0..n {
        for i in 0..n {
            out[g.index((i + dx) % n, (j + dy) % n, 0)] = f.values()[g.index(i, j, 0)];
        }
    }
    ScalarField::new(g, out).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn laplacian_has_zero_mean(values in prop::collection::vec(-1.0f64..1.0, 16 * 16)) {
        let f = field(16, values);
        let lap = laplacian(&f);
        let scale: f64 = lap.values().iter().map(|v| v.abs()).sum();
        prop_assert!(exec::sum(lap.values()).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn laplacian_commutes_with_shifts(
        values in prop::collection::vec(-1.0f64..1.0, 16 * 16),
        dx in 0usize..16,
        dy in 0usize..16,
    ) {
        let f = field(16, values);
        prop_assert_eq!(laplacian(&shift(&f, dx, dy)), shift(&laplacian(&f), dx, dy));
    }

    #[test]
    fn reductions_ignore_execution_mode(values in prop::collection::vec(-1e3f64..1e3, 1..20_000)) {
        exec::set_execution(Execution::Sequential);
        let seq = (exec::sum(&values), exec::dot(&values, &values));
        exec::set_execution(Execution::Parallel);
        let par = (exec::sum(&values), exec::dot(&values, &values));
        prop_assert_eq!(seq.0.to_bits(), par.0.to_bits());
        prop_assert_eq!(seq.1.to_bits(), par.1.to_bits());
    }

    #[test]
    fn extracted_disk_radius(cx in 0.0f64..1.0, cy in 0.0f64..1.0, r in 0.1f64..0.3) {
        let g = Grid::unit(2, 128).unwrap();
        let phi = disk_profile(&g, &[cx, cy], r, 0.02);
        let curve = extract_contour(&phi, 0.5).unwrap();
        prop_assert_eq!(curve.polylines.len(), 1);
        prop_assert!((radius_from_area(&curve) - r).abs() < 1e-3);
    }
}

const RUN: &str = r#"
[grid]
dims = [32, 32]

[model]
epsilon = 0.06
alpha = 50.0

[init.phi]
shape = "disk"
radius = 0.25

[init.u]
kind = "sine"
axis = 0
mean = 0.5
amplitude = 0.2

[stepping]
t_end = 0.002
cadence = 3
"#;

#[test]
fn config_survives_round_trip() {
    let cfg = parse_config(RUN).unwrap();
    assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn series_on_disk_matches_memory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(RUN).unwrap();
    let rec = simulate(&cfg, Some(dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    let back = read_series(&text).unwrap();
    assert_eq!(back.len(), rec.rows.len());
    for (a, b) in back.iter().zip(&rec.rows) {
        assert_eq!(a.report.t, b.report.t);
        assert_eq!(a.report.e, b.report.e);
        assert_eq!(a.geometry.map(|g| g.area), b.geometry.map(|g| g.area));
    }
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let cfg = parse_config(RUN).unwrap();
    exec::set_execution(Execution::Sequential);
    let seq = simulate(&cfg, None).unwrap();
    exec::set_execution(Execution::Parallel);
    let par = simulate(&cfg, None).unwrap();
    assert_eq!(seq.state, par.state);
}
