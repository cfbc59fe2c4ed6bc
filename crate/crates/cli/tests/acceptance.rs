//! Acceptance checks. Each test writes one PASS/FAIL line straight to
//! stdout (bypassing the test harness capture) and then asserts.

use std::f64::consts::PI;
use std::io::Write;
use std::process::Command;
use std::time::Instant;

use gasmaster::cm::{cm_c1, cm_c2, cm_refracted};
use gasmaster::colsim::{CollisionSimulator, TauMode};
use gasmaster::compare::temperature_sweep;
use gasmaster::ldl::{gamma_quadrature, kernel_k, squarewell_interpolation_scan};
use gasmaster::liouville::{build_generator, evolve_grid};
use gasmaster::{CMatrix, DensityMatrix, GasParameters, Method, RadialPotential, SimConfig, SpinModel, TabulatedPotential};
use nalgebra::Complex;

fn report(criterion: &str, pass: bool, detail: String) {
    let line = format!("acceptance {criterion}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
    assert!(pass, "acceptance {criterion}: {detail}");
}

fn c(re: f64) -> Complex<f64> {
    Complex::new(re, 0.0)
}

fn dephasing_model() -> SpinModel {
    let sz = CMatrix::from_row_slice(2, 2, &[c(1.), c(0.), c(0.), c(-1.)]);
    SpinModel::new(2, 2, CMatrix::zeros(2, 2), sz.kronecker(&sz), vec![0.5, 0.5]).unwrap()
}

fn plus_state() -> DensityMatrix {
    DensityMatrix::pure(&[c(1.0), c(1.0)]).unwrap()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol || diff.abs() <= 64.0 * f64::EPSILON * (left.abs() + right.abs()) {
            return left + right + diff / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let n = 64;
    let h = (b - a) / n as f64;
    (0..n)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            rec(f, x0, x1, f0, fm, f1, h / 6.0 * (f0 + 4.0 * fm + f1), tol / n as f64, 40)
        })
        .sum()
}

/// Trace distance ½‖a − b‖₁ via the eigenvalues of the Hermitian difference.
fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let d = a - b;
    let h = (&d + d.adjoint()) * c(0.5);
    0.5 * h.symmetric_eigen().eigenvalues.iter().map(|x| x.abs()).sum::<f64>()
}

#[test]
fn criterion_01_gaussian_closed_form() {
    let start = Instant::now();
    let (nu, u) = (0.01, 0.1);
    let pot = RadialPotential::gaussian(u);
    let mut worst: f64 = 0.0;
    for theta in log_grid(0.5, 1e4, 12) {
        let got = gamma_quadrature(&pot, &GasParameters::new(nu, theta).unwrap()).unwrap();
        let want = (2.0 * PI).powf(1.5) * nu * u * u / (theta.sqrt() * (1.0 + 1.0 / (8.0 * theta)));
        worst = worst.max((got / want - 1.0).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    report("1", worst <= 1e-6 && secs <= 10.0, format!("max rel err {worst:.2e}, {secs:.2} s"));
}

#[test]
fn criterion_02_fast_particle_forms() {
    let (nu, u, theta) = (0.01, 0.1, 1000.0);
    let g = GasParameters::new(nu, theta).unwrap();
    let gauss_fast = (2.0 * PI).powf(1.5) * nu * u * u / theta.sqrt();
    let well_fast = 2.0 * (2.0 * PI).sqrt() * nu * u * u / theta.sqrt();
    let rel = |x: f64, y: f64| (x / y - 1.0).abs();
    let gp = RadialPotential::gaussian(u);
    let wp = RadialPotential::square_well(u);
    let errs = [
        rel(gamma_quadrature(&gp, &g).unwrap(), gauss_fast),
        rel(cm_c2(&gp, &g).unwrap(), gauss_fast),
        rel(gamma_quadrature(&wp, &g).unwrap(), well_fast),
        rel(cm_c2(&wp, &g).unwrap(), well_fast),
        rel(gamma_quadrature(&wp, &g).unwrap(), well_fast * (1.0 - 9.0 / (16.0 * theta))),
    ];
    let pass = errs[0] <= 2e-3 && errs[1] <= 2e-3 && errs[2] <= 3e-3 && errs[3] <= 3e-3 && errs[4] <= 1e-3;
    report(
        "2",
        pass,
        format!(
            "gaussian gamma {:.2e} c2 {:.2e}; square well gamma {:.2e} c2 {:.2e} corrected {:.2e}",
            errs[0], errs[1], errs[2], errs[3], errs[4]
        ),
    );
}

#[test]
fn criterion_03_lamb_shift_equality() {
    let nu = 0.02;
    let table = TabulatedPotential::sample(|r| 0.3 * (1.0 - r / 3.0) * (-r).exp() - 0.1 * (-2.0 * r * r).exp(), 0.0, 6.0, 120).unwrap();
    let tab = RadialPotential::Tabulated(table);
    let tab_volume = 4.0 * PI * simpson(&|r| tab.value(r) * r * r, 0.0, tab.cutoff_radius(), 1e-15);
    let cases = [
        (RadialPotential::gaussian(0.3), 0.3 * (2.0 * PI).powf(1.5)),
        (RadialPotential::square_well(-0.2), -0.2 * 4.0 * PI / 3.0),
        (tab, tab_volume),
    ];
    let mut worst: f64 = 0.0;
    for (pot, volume) in &cases {
        for theta in [0.5, 5.0, 50.0, 500.0, 5000.0] {
            let c1 = cm_c1(pot, &GasParameters::new(nu, theta).unwrap()).unwrap();
            worst = worst.max((c1 / (nu * volume) - 1.0).abs());
        }
    }
    report("3", worst <= 1e-9, format!("max rel err {worst:.2e} over 3 potentials x 5 temperatures"));
}

fn ratio_bound_check(pot: RadialPotential, coeff: f64) -> (bool, String) {
    let grid = log_grid(20.0, 2000.0, 12);
    let rows = temperature_sweep(&pot, &dephasing_model(), 0.01, pot.strength(), &grid).unwrap();
    let worst = rows.iter().map(|r| (r.ratio - 1.0).abs() / (coeff / r.theta)).fold(0.0, f64::max);
    let last = rows.last().unwrap().ratio;
    let pass = worst <= 1.2 && (0.999..=1.001).contains(&last);
    (pass, format!("max |ratio-1|/({coeff}/theta) = {worst:.3} (limit 1.2), ratio(2000) = {last:.6}"))
}

#[test]
fn criterion_04_high_temperature_gaussian() {
    let (pass, detail) = ratio_bound_check(RadialPotential::gaussian(0.1), 1.0 / 8.0);
    report("4 (gaussian)", pass, detail);
}

#[test]
fn criterion_04_high_temperature_square_well() {
    let (pass, detail) = ratio_bound_check(RadialPotential::square_well(0.1), 9.0 / 16.0);
    report("4 (square well)", pass, detail);
}

#[test]
fn criterion_05_interpolation_error_value() {
    let scan = squarewell_interpolation_scan(0.1f64, 20.0, 20000).unwrap();
    let pct = 100.0 * scan.max_rel_error;
    report("5 (value)", (pct - 4.21).abs() <= 0.3, format!("max rel err {pct:.3}%"));
}

#[test]
fn criterion_05_interpolation_error_location() {
    let scan = squarewell_interpolation_scan(0.1f64, 20.0, 20000).unwrap();
    report("5 (location)", (scan.p_at_max - 5.03).abs() <= 0.05, format!("max at p = {:.4}", scan.p_at_max));
}

#[test]
fn criterion_06_gksl_propagation() {
    let g = GasParameters::new(0.01, 4.0).unwrap();
    let gamma = gamma_quadrature(&RadialPotential::gaussian(0.1), &g).unwrap();
    let gen = build_generator(&dephasing_model(), &CMatrix::zeros(2, 2), gamma).unwrap();
    let times: Vec<f64> = (0..=200).map(|i| 10.0 / gamma * i as f64 / 200.0).collect();
    let (mut trace, mut herm, mut min_eig, mut coh): (f64, f64, f64, f64) = (0.0, 0.0, f64::INFINITY, 0.0);
    for method in [Method::Expm, Method::RkAdaptive] {
        let traj = evolve_grid(&gen, &plus_state(), &times, method).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let m = s.matrix();
            trace = trace.max((m.trace() - c(1.0)).norm());
            herm = herm.max((m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max));
            min_eig = min_eig.min(m.clone().symmetric_eigen().eigenvalues.min());
            coh = coh.max((m[(0, 1)] - c(0.5 * (-2.0 * gamma * t).exp())).norm());
        }
    }
    let pass = trace <= 1e-10 && herm <= 1e-10 && min_eig >= -1e-8 && coh <= 1e-7;
    report("6", pass, format!("trace drift {trace:.1e}, hermiticity {herm:.1e}, min eigenvalue {min_eig:.1e}, coherence err {coh:.1e}"));
}

#[test]
fn criterion_07_monte_carlo_oracle() {
    let start = Instant::now();
    let (nu, u, theta) = (0.01, 0.05, 100.0);
    let pot = RadialPotential::square_well(u);
    let g = GasParameters::new(nu, theta).unwrap();
    let times: Vec<f64> = (1..=5).map(|i| 800.0 * i as f64).collect();
    let n = 100_000;
    let cfg = SimConfig {
        trajectories: n,
        t_end: 4000.0,
        seed: 20240601,
        sample_times: times.clone(),
        tau_mode: TauMode::Straight,
    };
    let res = CollisionSimulator::new(&dephasing_model(), &pot, &g, TauMode::Straight).unwrap().run(&plus_state(), &cfg).unwrap();
    // Here the GKSL solution is pure dephasing at rate 2 c2 with
    // c2 = 2√(2π)νu²/√θ; the first-order Lamb shift is Σ μ_i A_ii = 0.
    let c2 = 2.0 * (2.0 * PI).sqrt() * nu * u * u / theta.sqrt();
    let mut ok = true;
    let mut worst = String::new();
    let mut worst_ratio: f64 = 0.0;
    for (i, &t) in times.iter().enumerate() {
        let coh = 0.5 * (-2.0 * c2 * t).exp();
        let oracle = CMatrix::from_row_slice(2, 2, &[c(0.5), c(coh), c(coh), c(0.5)]);
        let d = trace_distance(&res.mean[i], &oracle);
        let bound = 0.02f64.max(4.0 * res.trace_distance_se(i));
        ok &= d <= bound;
        if d / bound >= worst_ratio {
            worst_ratio = d / bound;
            worst = format!("worst t = {t}: distance {d:.2e} vs bound {bound:.2e}");
        }
    }
    let rate = nu * PI * (8.0 * theta / PI).sqrt();
    let want = rate * 4000.0;
    let sigma = (want / n as f64).sqrt();
    let dev = (res.collisions.mean - want).abs() / sigma;
    let secs = start.elapsed().as_secs_f64();
    let pass = ok && dev <= 3.0 && secs <= 120.0;
    report("7", pass, format!("{worst}; collision mean off by {dev:.2} sigma; {secs:.1} s"));
}

#[test]
fn criterion_08_kernel_limit_value() {
    let err = (kernel_k(200.0, 1.0, 0.5).unwrap() - 3f64.ln() / 2.0).abs();
    report("8 (value)", err <= 5e-3, format!("|K(200) - ln3/2| = {err:.2e}"));
}

#[test]
fn criterion_08_kernel_limit_monotone() {
    let errs: Vec<f64> = [10.0, 50.0, 200.0].iter().map(|&p| (kernel_k(p, 1.0, 0.5).unwrap() - 3f64.ln() / 2.0).abs()).collect();
    let pass = errs[0] > errs[1] && errs[1] > errs[2];
    report("8 (monotone)", pass, format!("errors at p = 10, 50, 200: {:.2e}, {:.2e}, {:.2e}", errs[0], errs[1], errs[2]));
}

#[test]
fn criterion_09_refracted_slopes() {
    let (u, theta) = (-0.1, 100.0);
    let pot = RadialPotential::square_well(u);
    let g = GasParameters::new(0.01, theta).unwrap();
    let (c1_0, c2_0) = cm_refracted(&pot, &g, 0.0).unwrap();
    let x = 1e-6;
    // <F> u / θ = −x, an attractive mean field.
    let (c1, c2) = cm_refracted(&pot, &g, x * theta / -u).unwrap();
    let s1 = (c1 / c1_0 - 1.0) / -x;
    let s2 = (c2 / c2_0 - 1.0) / -x;
    let pass = (s1 + 1.0).abs() <= 0.02 && (s2 - 1.0).abs() <= 0.02;
    report("9", pass, format!("slopes c1 {s1:.4}, c2 {s2:.5} at |<F>u|/theta = {x:e}"));
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "model": {"dim_s": 2, "dim_g": 2,
            "h_s": [[0.2, 0], [0.05, 0], [0.05, 0], [-0.2, 0]],
            "f": [[1,0],[0,0],[0,0],[0,0], [0,0],[-1,0],[0,0],[0,0], [0,0],[0,0],[-1,0],[0,0], [0,0],[0,0],[0,0],[1,0]]},
        "potential": {"kind": "square_well", "u": 0.2},
        "gas": {"nu": 0.02, "theta": 9.0},
        "simulate": {"rho0": [[0.5, 0], [0.5, 0], [0.5, 0], [0.5, 0]], "trajectories": 2000, "seed": 77, "sample_times": [1.0, 10.0, 30.0]}
    });
    let path = dir.path().join("config.json");
    std::fs::write(&path, serde_json::to_vec(&cfg).unwrap()).unwrap();
    let run = |threads: &str| {
        let out = dir.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_gasmaster"))
            .args(["simulate", "--threads", threads, "--config"])
            .arg(&path)
            .arg("--output")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        ["ensemble.csv", "ensemble.json"].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let one = run("1");
    let many = run("4");
    report("10", one == many, format!("{} + {} bytes compared, 1 vs 4 threads", one[0].len(), one[1].len()));
}
