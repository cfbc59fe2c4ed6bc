mod common;

use common::*;
use gasmaster::compare::{discrepancy_estimates, temperature_sweep, write_sweep_csv, SWEEP_COLUMNS};
use gasmaster::{GasParameters, RadialPotential, TabulatedPotential};
use proptest::prelude::*;
use std::f64::consts::PI;

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// Least-squares C in |ratio − 1| ≈ C/θ.
fn fitted_c(thetas: &[f64], ratios: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&t, &r) in thetas.iter().zip(ratios) {
        num += (r - 1.0).abs() / t;
        den += 1.0 / (t * t);
    }
    num / den
}

#[test]
fn gaussian_ratio_is_analytic() {
    let grid = log_grid(1.0, 1e4, 9);
    let rows = temperature_sweep(&RadialPotential::gaussian(1.0), &dephasing_model(), 0.01, 0.1, &grid).unwrap();
    for r in &rows {
        assert!(r.is_ok(), "{r:?}");
        let want = 1.0 / (1.0 + 1.0 / (8.0 * r.theta));
        assert!((r.ratio / want - 1.0).abs() < 1e-6, "theta {}: {} vs {want}", r.theta, r.ratio);
        assert!((r.gamma_ldl_closed.unwrap() / r.gamma_ldl - 1.0).abs() < 1e-6);
        // First-order Lamb shifts coincide for any potential.
        assert!((r.lamb_ldl_coeff / r.lamb_cm_coeff - 1.0).abs() < 1e-8);
        assert!((r.c2_cm / ((2.0 * PI).powf(1.5) * 0.01 * 0.01 / r.theta.sqrt()) - 1.0).abs() < 1e-8);
    }
    let fit_grid = log_grid(20.0, 2000.0, 7);
    let fit = temperature_sweep(&RadialPotential::gaussian(1.0), &dephasing_model(), 0.01, 0.1, &fit_grid).unwrap();
    let c = fitted_c(&fit_grid, &fit.iter().map(|r| r.ratio).collect::<Vec<_>>());
    assert!((c / 0.125 - 1.0).abs() < 0.5, "C = {c}");
}

#[test]
fn well_ratio_matches_exact_bracket() {
    let grid = [20.0, 100.0, 2000.0];
    let rows = temperature_sweep(&RadialPotential::square_well(1.0), &dephasing_model(), 0.01, 0.1, &grid).unwrap();
    for r in &rows {
        assert!(r.is_ok(), "{r:?}");
        let c2 = 2.0 * (2.0 * PI).sqrt() * 0.01 * 0.01 / r.theta.sqrt();
        let want = well_gamma_oracle(0.01, 0.1, r.theta) / c2;
        assert!((r.ratio / want - 1.0).abs() < 1e-8, "theta {}: {} vs {want}", r.theta, r.ratio);
        assert!(r.ratio < 1.0);
        assert!((r.lamb_ldl_coeff / r.lamb_cm_coeff - 1.0).abs() < 1e-8);
    }
    // Deviation shrinks with temperature.
    assert!((rows[2].ratio - 1.0).abs() < (rows[1].ratio - 1.0).abs());
    assert!((rows[2].ratio - 1.0).abs() < 1e-3);
}

#[test]
fn ratio_tends_to_one() {
    for pot in [RadialPotential::gaussian(1.0), RadialPotential::square_well(1.0)] {
        let rows = temperature_sweep(&pot, &dephasing_model(), 0.01, 0.1, &[1e6]).unwrap();
        assert!((rows[0].ratio - 1.0).abs() < 1e-4, "{:?}: {}", pot.kind(), rows[0].ratio);
    }
}

#[test]
fn tabulated_sweep() {
    let table = RadialPotential::Tabulated(TabulatedPotential::sample(|r| (-r * r / 2.0).exp(), 0.0, 8.0, 200).unwrap());
    let grid = [5.0, 50.0];
    let rows = temperature_sweep(&table, &dephasing_model(), 0.01, 0.1, &grid).unwrap();
    let reference = temperature_sweep(&RadialPotential::gaussian(1.0), &dephasing_model(), 0.01, 0.1, &grid).unwrap();
    for (a, b) in rows.iter().zip(&reference) {
        assert!(a.is_ok() && a.gamma_ldl_closed.is_none());
        assert!((a.ratio / b.ratio - 1.0).abs() < 1e-5, "{} vs {}", a.ratio, b.ratio);
    }
}

#[test]
fn sweep_failures_and_validation() {
    let model = dephasing_model();
    let pot = RadialPotential::square_well(1.0);
    let rows = temperature_sweep(&pot, &model, 0.01, 0.0, &[10.0, 20.0]).unwrap();
    for r in &rows {
        assert!(!r.is_ok());
        assert!(r.ratio.is_nan() && r.gamma_ldl.is_nan());
        assert!(r.error.as_deref().unwrap().contains("vanishes"));
    }
    assert!(temperature_sweep(&pot, &model, 0.01, 0.1, &[]).unwrap().is_empty());
    assert!(temperature_sweep(&pot, &model, 0.01, 0.1, &[2.0, 1.0]).is_err());
    assert!(temperature_sweep(&pot, &model, 0.01, 0.1, &[1.0, 1.0]).is_err());
    assert!(temperature_sweep(&pot, &model, 0.01, 0.1, &[-1.0]).is_err());
}

#[test]
fn discrepancy_scales() {
    let model = dephasing_model();
    let g = GasParameters::new(0.01, 100.0).unwrap();
    let (hh, dd) = discrepancy_estimates(&model, &g, 0.1);
    assert!((hh - 1e-3).abs() < 1e-15);
    assert!((dd - 1e-2).abs() < 1e-15);
    let g = GasParameters::new(0.01, 0.5).unwrap();
    let (hh, _) = discrepancy_estimates(&model, &g, 1e-6);
    assert!((hh - (-0.5f64).exp() / 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn sweep_csv_layout() {
    let rows = temperature_sweep(&RadialPotential::gaussian(1.0), &dephasing_model(), 0.01, 0.1, &[1.0, 10.0]).unwrap();
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &[("nu", "0.01".into()), ("u", "0.1".into())], &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# nu=0.01");
    assert_eq!(lines[1], "# u=0.1");
    assert_eq!(lines[2], SWEEP_COLUMNS.join(","));
    assert_eq!(lines.len(), 5);
    let fields: Vec<&str> = lines[3].split(',').collect();
    assert_eq!(fields.len(), SWEEP_COLUMNS.len());
    assert_eq!(fields[0].parse::<f64>().unwrap(), 1.0);
    assert_eq!(fields[4].parse::<f64>().unwrap(), rows[0].ratio);
    assert!(fields[9].is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gaussian_ratio_property(theta in 1.0f64..1e4, u in 0.01f64..1.0, nu in 1e-4f64..0.1) {
        let rows = temperature_sweep(&RadialPotential::gaussian(1.0), &dephasing_model(), nu, u, &[theta]).unwrap();
        let want = 1.0 / (1.0 + 1.0 / (8.0 * theta));
        prop_assert!((rows[0].ratio / want - 1.0).abs() < 1e-6);
    }
}
