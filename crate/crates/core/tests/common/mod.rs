//! Test-only helpers: an adaptive Simpson rule that shares nothing with the
//! library quadrature, and a few standard models.
#![allow(dead_code)]

use gasmaster::{CMatrix, GasParameters, RadialPotential, SpinModel};
use std::f64::consts::PI;
use nalgebra::Complex;

fn simpson_rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    // Below the roundoff floor further halving only chases noise.
    let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth == 0 || diff.abs() <= 15.0 * tol || diff.abs() <= floor {
        return left + right + diff / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson over `n` equal sub-intervals with absolute tolerance
/// `tol` shared between them.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize, tol: f64) -> f64 {
    let h = (b - a) / n as f64;
    (0..n)
        .map(|i| {
            let (x0, x1) = (a + h * i as f64, a + h * (i + 1) as f64);
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            simpson_rec(&f, x0, x1, f0, fm, f1, whole, tol / n as f64, 40)
        })
        .sum()
}

pub fn c(re: f64, im: f64) -> Complex<f64> {
    Complex::new(re, im)
}

pub fn sigma_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn sigma_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

/// F = σz ⊗ σz, uniform μ, H_S = 0.
pub fn dephasing_model() -> SpinModel {
    SpinModel::new(2, 2, CMatrix::zeros(2, 2), sigma_z().kronecker(&sigma_z()), vec![0.5, 0.5]).unwrap()
}

/// Random Hermitian matrix from a flat list of at least n² reals.
pub fn hermitian_from(values: &[f64], n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        m[(i, i)] = c(values[k], 0.0);
        k += 1;
        for j in (i + 1)..n {
            let z = c(values[k], values[k + 1]);
            k += 2;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// ∫₀¹ dξ/ξ B(p, ξ)² by direct quadrature of the Born amplitude.
pub fn bracket_direct(pot: &RadialPotential, p: f64) -> f64 {
    let n = ((4.0 * p).ceil() as usize).max(4) * 2;
    simpson(
        |xi| {
            if xi == 0.0 {
                return 0.0;
            }
            let b = pot.born_amplitude(p, xi).unwrap();
            b * b / xi
        },
        0.0,
        1.0,
        n,
        1e-15,
    )
}

/// Square-well bracket for u = 1 written out independently: closed form
/// away from the origin, direct quadrature near it.
pub fn well_bracket(p: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    if p < 0.5 {
        return bracket_direct(&RadialPotential::square_well(1.0), p);
    }
    let p4 = p.powi(4);
    (32.0 * p4 - 8.0 * p * p - 1.0 + (4.0 * p).cos() + 4.0 * p * (4.0 * p).sin()) / (128.0 * p4)
}

/// Γ = 32π²ν ∫ f(p) p · bracket(p) dp over [0, 12√θ].
pub fn well_gamma_oracle(nu: f64, u: f64, theta: f64) -> f64 {
    let g = GasParameters::new(nu, theta).unwrap();
    let pm = 12.0 * theta.sqrt();
    let n = ((pm / 0.5).ceil() as usize).max(16);
    let scale = g.mb_pdf(0.0) * pm * pm;
    32.0 * PI * PI * nu * u * u * simpson(|p| g.mb_pdf(p) * p * well_bracket(p), 0.0, pm, n, 1e-13 * scale)
}
