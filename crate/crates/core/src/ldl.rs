//! Low-density-limit generator: the dissipation rate Γ, the Lamb-shift
//! coefficient and the finite-temperature corrections for the square well.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GasParameters, SpinModel};
use crate::potentials::{PotentialKind, RadialPotential};
use crate::quadrature::{
    breaks_with_max_width, gauss_kronrod, integrate, integrate_panels, integrate_with_breaks, panel_integrals,
    uniform_breaks, ErrorSlot, Estimate, Tolerance,
};
use crate::scalar::{cplx, CMatrix, Real};

/// Number of fixed outer panels on [0, p_max].
const MOMENTUM_PANELS: usize = 24;
const OUTER_REL_TOL: f64 = 1e-10;
const INNER_REL_TOL: f64 = 1e-12;

/// Order of the Lamb-shift expansion in the potential strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambOrder {
    First,
    Second,
}

impl TryFrom<u8> for LambOrder {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(LambOrder::First),
            2 => Ok(LambOrder::Second),
            _ => Err(Error::InvalidParameter(format!("Lamb-shift order must be 1 or 2, got {v}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdlCoefficients<T> {
    /// Dissipator rate Γ.
    pub gamma: T,
    /// Quadrature error estimate for `gamma`.
    pub gamma_error: T,
    /// nu ∫V d³r, multiplying sum_i mu_i A_ii in the Lamb shift.
    pub lamb_coeff: T,
    /// Fast-particle closed form, when one exists.
    pub gamma_closed: Option<T>,
    /// Finite-temperature factor multiplying `gamma_closed`.
    pub correction_factor: Option<T>,
}

/// Γ together with the Lamb coefficient and any closed forms.
pub fn ldl_coefficients<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>) -> Result<LdlCoefficients<T>> {
    let est = gamma_quadrature_estimate(pot, gas)?;
    let u = pot.strength();
    let (gamma_closed, correction_factor) = match pot.kind() {
        PotentialKind::Gaussian => (
            Some(gamma_gaussian_fast(gas, u)),
            Some(T::one() / (T::one() + T::one() / (T::lit(8.0) * gas.theta))),
        ),
        PotentialKind::SquareWell => (Some(gamma_squarewell_fast(gas, u)), Some(squarewell_correction_factor(gas.theta))),
        PotentialKind::Tabulated => (None, None),
    };
    Ok(LdlCoefficients {
        gamma: est.value,
        gamma_error: est.error,
        lamb_coeff: lamb_coefficient(pot, gas)?,
        gamma_closed,
        correction_factor,
    })
}

/// Γ = 32 π² ν ∫ f(p) p dp ∫₀¹ dξ/ξ B(p, ξ)².
pub fn gamma_quadrature<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>) -> Result<T> {
    Ok(gamma_quadrature_estimate(pot, gas)?.value)
}

/// [`gamma_quadrature`] with its error estimate.
///
/// With k = 2pξ the inner integral becomes I(p) = ∫₀^{2p} g(k)²/k dk. I is
/// accumulated once on panels no wider than π/R in k (R the potential's
/// feature radius) and completed per outer node by a short partial panel.
/// The outer p integral runs over fixed panels on [0, 12√θ] and is summed in
/// panel order, so the result does not depend on the thread count.
pub fn gamma_quadrature_estimate<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>) -> Result<Estimate<T>> {
    if gas.nu == T::zero() || pot.strength() == T::zero() {
        return Ok(Estimate {
            value: T::zero(),
            error: T::zero(),
            evaluations: 0,
        });
    }
    let p_max = gas.p_max();
    let cache = TransferCache::build(pot, T::lit(2.0) * p_max)?;
    let slot = ErrorSlot::new();
    let integrand = |p: T| {
        let inner = slot.guard(cache.integral_to(pot, T::lit(2.0) * p));
        gas.mb_pdf(p) * p * inner
    };
    let outer = integrate_panels(
        &integrand,
        &uniform_breaks(T::zero(), p_max, MOMENTUM_PANELS),
        &Tolerance::relative(OUTER_REL_TOL),
    );
    if let Some(e) = slot.take() {
        return Err(e);
    }
    let outer = outer?;
    let prefactor = T::lit(32.0) * T::pi() * T::pi() * gas.nu;
    let value = prefactor * outer.value;
    if value < T::zero() {
        return Err(Error::Internal(format!("negative dissipation rate {value}")));
    }
    Ok(Estimate {
        value,
        error: prefactor * outer.error + T::tol(INNER_REL_TOL) * value,
        evaluations: outer.evaluations + cache.evaluations,
    })
}

/// Cumulative ∫₀^k g(s)²/s ds on a fixed panel grid.
struct TransferCache<T> {
    breaks: Vec<T>,
    cumulative: Vec<T>,
    evaluations: usize,
}

fn transfer_integrand<T: Real>(pot: &RadialPotential<T>, slot: &ErrorSlot<Error>, k: T) -> T {
    let g = slot.guard(pot.born_transform(k));
    g * g / k
}

impl<T: Real> TransferCache<T> {
    fn build(pot: &RadialPotential<T>, k_max: T) -> Result<Self> {
        let breaks = breaks_with_max_width(T::zero(), k_max, T::pi() / pot.feature_radius());
        let slot = ErrorSlot::new();
        let f = |k: T| transfer_integrand(pot, &slot, k);
        // One rule per panel sets the scale for an absolute floor, so panels
        // far out in the tail are not refined to relative accuracy.
        let rough = breaks
            .par_windows(2)
            .map(|w| gauss_kronrod(&f, w[0], w[1]).0.abs())
            .collect::<Vec<T>>()
            .into_iter()
            .fold(T::zero(), |a, b| a + b);
        let tol = Tolerance::relative(INNER_REL_TOL);
        let tol = tol.with_abs(tol.rel * rough);
        let panels = panel_integrals(&f, &breaks, &tol);
        if let Some(e) = slot.take() {
            return Err(e);
        }
        let panels = panels?;
        let mut cumulative = Vec::with_capacity(breaks.len());
        let mut acc = T::zero();
        cumulative.push(acc);
        let mut evaluations = 0;
        for p in &panels {
            acc += p.value;
            evaluations += p.evaluations;
            cumulative.push(acc);
        }
        Ok(Self {
            breaks,
            cumulative,
            evaluations,
        })
    }

    fn integral_to(&self, pot: &RadialPotential<T>, k: T) -> Result<T> {
        let m = self.breaks.partition_point(|&b| b <= k).saturating_sub(1);
        let start = self.breaks[m];
        let base = self.cumulative[m];
        if k <= start {
            return Ok(base);
        }
        let slot = ErrorSlot::new();
        let f = |s: T| transfer_integrand(pot, &slot, s);
        let (v, err, _) = gauss_kronrod(&f, start, k);
        if let Some(e) = slot.take() {
            return Err(e);
        }
        let tol = Tolerance::relative(INNER_REL_TOL);
        if v.is_finite() && err <= tol.target(base + v) {
            return Ok(base + v);
        }
        let est = integrate(&f, start, k, &tol.with_abs(tol.rel * base));
        if let Some(e) = slot.take() {
            return Err(e);
        }
        Ok(base + est?.value)
    }
}

/// (2π)^{3/2} ν u² / (√θ (1 + 1/(8θ))), exact for the Gaussian.
pub fn gamma_gaussian_exact<T: Real>(gas: &GasParameters<T>, u: T) -> T {
    gamma_gaussian_fast(gas, u) / (T::one() + T::one() / (T::lit(8.0) * gas.theta))
}

/// (2π)^{3/2} ν u² / √θ.
pub fn gamma_gaussian_fast<T: Real>(gas: &GasParameters<T>, u: T) -> T {
    T::two_pi().powf(T::lit(1.5)) * gas.nu * u * u / gas.theta.sqrt()
}

/// 2 √(2π) ν u² / √θ.
pub fn gamma_squarewell_fast<T: Real>(gas: &GasParameters<T>, u: T) -> T {
    T::lit(2.0) * T::two_pi().sqrt() * gas.nu * u * u / gas.theta.sqrt()
}

/// 1 − 9/(16θ).
pub fn squarewell_correction_factor<T: Real>(theta: T) -> T {
    T::one() - T::lit(9.0) / (T::lit(16.0) * theta)
}

/// Square-well Γ from the interpolated ξ bracket:
/// 2 √(2π) ν u² / √θ · (1 − 9/(16θ)).
pub fn gamma_squarewell_interpolated<T: Real>(gas: &GasParameters<T>, u: T) -> T {
    gamma_squarewell_fast(gas, u) * squarewell_correction_factor(gas.theta)
}

/// Exact square-well bracket ∫₀¹ dξ/ξ B(p, ξ)²:
/// u² (32p⁴ − 8p² − 1 + cos 4p + 4p sin 4p) / (128 p⁴).
///
/// The closed form cancels catastrophically for small p, where its power
/// series is summed instead.
pub fn squarewell_bracket_exact<T: Real>(p: T, u: T) -> T {
    let u2 = u * u;
    if p < T::one() {
        // u² Σ_{m>=3} (-1)^{m+1} (2m-1) 4^{2m} p^{2m-4} / (128 (2m)!)
        let x = T::lit(16.0) * p * p;
        // m = 3 term, then ratio recurrence.
        let mut term = T::lit(5.0) * T::lit(4096.0) / (T::lit(128.0) * T::lit(720.0)) * p * p;
        let mut sum = term;
        let mut m = 3.0;
        loop {
            let next = -term * x * T::lit(2.0 * m + 1.0) / (T::lit(2.0 * m - 1.0) * T::lit((2.0 * m + 1.0) * (2.0 * m + 2.0)));
            sum += next;
            term = next;
            m += 1.0;
            if term.abs() <= T::eps() * sum.abs() || m > 60.0 {
                break;
            }
        }
        return u2 * sum;
    }
    let p2 = p * p;
    let four_p = T::lit(4.0) * p;
    u2 * (T::lit(32.0) * p2 * p2 - T::lit(8.0) * p2 - T::one() + four_p.cos() + four_p * four_p.sin())
        / (T::lit(128.0) * p2 * p2)
}

/// Interpolating bracket (u²/4)(1 − exp(−8p²/9)).
pub fn squarewell_bracket_interpolated<T: Real>(p: T, u: T) -> T {
    u * u / T::lit(4.0) * (T::one() - (-T::lit(8.0) * p * p / T::lit(9.0)).exp())
}

/// Location and size of the largest relative deviation of the interpolating
/// bracket from the exact one, relative to the interpolant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationScan<T> {
    pub p_at_max: T,
    pub max_rel_error: T,
}

/// Scans [p_lo, p_hi] on `samples` points, then refines the best sample by
/// golden-section search.
pub fn squarewell_interpolation_scan<T: Real>(p_lo: T, p_hi: T, samples: usize) -> Result<InterpolationScan<T>> {
    if !(p_lo > T::zero() && p_hi > p_lo) || samples < 3 {
        return Err(Error::InvalidParameter("scan needs 0 < p_lo < p_hi and at least 3 samples".into()));
    }
    let rel = |p: T| {
        let approx = squarewell_bracket_interpolated(p, T::one());
        (squarewell_bracket_exact(p, T::one()) - approx).abs() / approx
    };
    let h = (p_hi - p_lo) / T::lit((samples - 1) as f64);
    let grid = |i: usize| p_lo + h * T::lit(i as f64);
    let best = (0..samples)
        .max_by(|&a, &b| rel(grid(a)).partial_cmp(&rel(grid(b))).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    let mut a = grid(best.saturating_sub(1));
    let mut b = grid((best + 1).min(samples - 1));
    let ratio = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    for _ in 0..200 {
        if b - a <= T::tol(1e-12) * b.abs() {
            break;
        }
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if rel(c) > rel(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let p = T::lit(0.5) * (a + b);
    Ok(InterpolationScan {
        p_at_max: p,
        max_rel_error: rel(p),
    })
}

/// ν ∫ V d³r.
pub fn lamb_coefficient<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>) -> Result<T> {
    Ok(gas.nu * pot.volume_integral()?)
}

/// Scale e^{−θ}/√θ of the exponentially small terms dropped from the
/// second-order square-well Lamb shift.
pub fn exponential_error_scale<T: Real>(theta: T) -> T {
    (-theta).exp() / theta.sqrt()
}

/// Lamb-shift Hamiltonian.
///
/// First order: ν ∫V d³r · Σ μ_i A_ii for any potential. Second order
/// (square well only): (4π/3) ν u Σ μ_i (A_ii − (2u/θ) (F²)_ii).
pub fn lamb_shift_ldl<T: Real>(
    model: &SpinModel<T>,
    pot: &RadialPotential<T>,
    gas: &GasParameters<T>,
    order: LambOrder,
) -> Result<CMatrix<T>> {
    match order {
        LambOrder::First => {
            let c = lamb_coefficient(pot, gas)?;
            Ok(model.mean_diagonal_jump() * cplx(c, T::zero()))
        }
        LambOrder::Second => {
            if pot.kind() != PotentialKind::SquareWell {
                return Err(Error::Unsupported(format!(
                    "second-order Lamb shift is only available for the square well, not {}",
                    pot.kind()
                )));
            }
            if gas.theta < T::lit(10.0) {
                log::warn!(
                    "second-order Lamb shift at theta = {} is outside its high-temperature range (error scale {:e})",
                    gas.theta,
                    exponential_error_scale(gas.theta).as_f64()
                );
            }
            let u = pot.strength();
            let c = T::lit(4.0) * T::pi() / T::lit(3.0) * gas.nu * u;
            let corr = T::lit(2.0) * u / gas.theta;
            let m = model.mean_diagonal_jump() - model.mean_diagonal_f_squared() * cplx(corr, T::zero());
            Ok(m * cplx(c, T::zero()))
        }
    }
}

/// K(p, r, r') = ∫₀¹ sin(2prξ) sin(2pr'ξ) dξ/ξ.
///
/// The integrand vanishes linearly at ξ = 0. For large p the kernel tends to
/// ½ ln((r + r')/|r − r'|), which is singular at r = r'; that point is
/// rejected.
pub fn kernel_k<T: Real>(p: T, r: T, r_prime: T) -> Result<T> {
    if !(p > T::zero() && r > T::zero() && r_prime > T::zero()) {
        return Err(Error::InvalidParameter("kernel needs p, r, r' > 0".into()));
    }
    if r == r_prime {
        return Err(Error::InvalidParameter("kernel is singular at r = r'".into()));
    }
    let two_p = T::lit(2.0) * p;
    let breaks = breaks_with_max_width(T::zero(), T::one(), T::pi() / (two_p * (r + r_prime)));
    let est = integrate_with_breaks(
        &|xi: T| (two_p * r * xi).sin() * (two_p * r_prime * xi).sin() / xi,
        &breaks,
        &Tolerance::relative(1e-10).with_abs(T::tol(1e-13)),
    )?;
    Ok(est.value)
}

/// High-momentum limit ½ ln((r + r')/|r − r'|).
pub fn kernel_limit<T: Real>(r: T, r_prime: T) -> T {
    T::lit(0.5) * ((r + r_prime) / (r - r_prime).abs()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::maxwell_boltzmann_pdf;
    use crate::potentials::TabulatedPotential;
    use nalgebra::Complex;
    use std::f64::consts::PI;

    fn gas(nu: f64, theta: f64) -> GasParameters<f64> {
        GasParameters::new(nu, theta).unwrap()
    }

    /// Γ with the integration order swapped: the p integral of f(p) p over
    /// p > k/2 is elementary, leaving one integral over k.
    fn gamma_swapped(pot: &RadialPotential<f64>, g: &GasParameters<f64>) -> f64 {
        let theta = g.theta;
        let w = |k: f64| (2.0 * PI * theta).powf(-1.5) * theta * (-k * k / (8.0 * theta)).exp();
        let kmax = 2.0 * g.p_max();
        let breaks = breaks_with_max_width(0.0, kmax, 0.5);
        let v = integrate_with_breaks(
            &|k: f64| {
                let b = pot.born_transform(k).unwrap();
                b * b / k * w(k)
            },
            &breaks,
            &Tolerance::relative(1e-12),
        )
        .unwrap()
        .value;
        32.0 * PI * PI * g.nu * v
    }

    #[test]
    fn gaussian_reference_value() {
        let g = gas(0.01, 1.0);
        let v = gamma_quadrature(&RadialPotential::gaussian(0.1), &g).unwrap();
        assert!((v - 1.39997e-3).abs() < 1e-8, "{v}");
        assert!((v - gamma_gaussian_exact(&g, 0.1)).abs() < 1e-6 * v);
    }

    #[test]
    fn gaussian_matches_swapped_order() {
        for theta in [0.5, 3.0, 40.0] {
            let g = gas(0.02, theta);
            let pot = RadialPotential::gaussian(-0.3);
            let a = gamma_quadrature(&pot, &g).unwrap();
            let b = gamma_swapped(&pot, &g);
            assert!((a - b).abs() < 1e-9 * b, "theta {theta}: {a} vs {b}");
        }
    }

    #[test]
    fn square_well_matches_swapped_order() {
        for theta in [1.0, 20.0, 300.0] {
            let g = gas(0.01, theta);
            let pot = RadialPotential::square_well(0.1);
            let a = gamma_quadrature(&pot, &g).unwrap();
            let b = gamma_swapped(&pot, &g);
            assert!((a - b).abs() < 1e-8 * b, "theta {theta}: {a} vs {b}");
        }
    }

    #[test]
    fn tabulated_matches_closed_form() {
        let table = TabulatedPotential::sample(|r: f64| 0.1 * (-r * r / 2.0).exp(), 0.0, 8.0, 400).unwrap();
        let g = gas(0.01, 2.0);
        let a = gamma_quadrature(&RadialPotential::Tabulated(table), &g).unwrap();
        let e = gamma_gaussian_exact(&g, 0.1);
        assert!((a - e).abs() < 1e-5 * e, "{a} vs {e}");
    }

    #[test]
    fn zero_density_or_strength() {
        assert_eq!(gamma_quadrature(&RadialPotential::gaussian(0.0), &gas(0.1, 1.0)).unwrap(), 0.0);
        assert_eq!(gamma_quadrature(&RadialPotential::square_well(1.0), &gas(0.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn square_well_bracket_matches_direct_xi_integral() {
        let pot = RadialPotential::square_well(0.4);
        for p in [0.05, 0.3, 0.9, 1.0, 1.1, 2.5, 5.03, 17.0] {
            let breaks = breaks_with_max_width(0.0, 1.0, 0.5 / p);
            let direct = integrate_with_breaks(
                &|xi: f64| {
                    let b = pot.born_amplitude(p, xi).unwrap();
                    b * b / xi
                },
                &breaks,
                &Tolerance::relative(1e-13),
            )
            .unwrap()
            .value;
            let exact = squarewell_bracket_exact(p, 0.4);
            assert!((exact - direct).abs() < 1e-11 * direct, "p {p}: {exact} vs {direct}");
        }
    }

    #[test]
    fn square_well_bracket_series_joins_closed_form() {
        let below = squarewell_bracket_exact(1.0f64 - 1e-12, 1.0);
        let at = squarewell_bracket_exact(1.0, 1.0);
        assert!((below - at).abs() < 1e-11 * at);
    }

    #[test]
    fn interpolated_bracket_asymptotics() {
        let large = squarewell_bracket_exact(400.0f64, 1.0);
        assert!((large - 0.25).abs() < 1e-5);
        let small = squarewell_bracket_exact(1e-3f64, 1.0);
        let small_i = squarewell_bracket_interpolated(1e-3, 1.0);
        // Both start as (2/9) p².
        assert!((small / small_i - 1.0).abs() < 1e-5);
    }

    #[test]
    fn correction_factor_values() {
        assert!((squarewell_correction_factor(100.0f64) - 0.994375).abs() < 1e-15);
        assert!((squarewell_correction_factor(1e12f64) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lamb_shift_first_order() {
        let sz = CMatrix::from_row_slice(2, 2, &[Complex::new(1.0, 0.0), Complex::new(0.0, 0.0), Complex::new(0.0, 0.0), Complex::new(-1.0, 0.0)]);
        let model = SpinModel::new(2, 2, CMatrix::zeros(2, 2), sz.kronecker(&sz), vec![0.5, 0.5]).unwrap();
        let h = lamb_shift_ldl(&model, &RadialPotential::gaussian(0.3), &gas(0.01, 5.0), LambOrder::First).unwrap();
        assert!(h.iter().all(|z| z.norm() < 1e-16));

        let model = SpinModel::new(2, 2, CMatrix::zeros(2, 2), sz.kronecker(&sz), vec![1.0, 0.0]).unwrap();
        let h = lamb_shift_ldl(&model, &RadialPotential::square_well(0.3), &gas(0.01, 5.0), LambOrder::First).unwrap();
        let c = 4.0 * PI / 3.0 * 0.01 * 0.3;
        assert!((h[(0, 0)].re - c).abs() < 1e-16 && (h[(1, 1)].re + c).abs() < 1e-16);
    }

    #[test]
    fn lamb_shift_second_order() {
        let sx = CMatrix::from_row_slice(2, 2, &[Complex::new(0.0, 0.0), Complex::new(1.0, 0.0), Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)]);
        let f = sx.kronecker(&sx);
        let model = SpinModel::new(2, 2, CMatrix::zeros(2, 2), f, vec![0.5, 0.5]).unwrap();
        let g = gas(0.01, 50.0);
        // A_ii = 0 and F² = I, so only the correction survives.
        let h = lamb_shift_ldl(&model, &RadialPotential::square_well(0.2), &g, LambOrder::Second).unwrap();
        let expected = -(4.0 * PI / 3.0) * 0.01 * 0.2 * (2.0 * 0.2 / 50.0);
        assert!((h[(0, 0)].re - expected).abs() < 1e-18);
        assert!((h[(1, 1)].re - expected).abs() < 1e-18);
        assert!(h[(0, 1)].norm() < 1e-18);
        let r = lamb_shift_ldl(&model, &RadialPotential::gaussian(0.2), &g, LambOrder::Second);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn kernel_basics() {
        let a = kernel_k(3.0f64, 1.0, 0.5).unwrap();
        let b = kernel_k(3.0, 0.5, 1.0).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(kernel_k(3.0, 1.0, 1.0).is_err());
        assert!((kernel_limit(1.0f64, 0.5) - 0.549_306_144_334_054_8).abs() < 1e-15);
        // Small p: K ≈ ∫ 4p² r r' ξ dξ = 2 p² r r'.
        let small = kernel_k(1e-3f64, 1.0, 0.5).unwrap();
        assert!((small - 2.0 * 1e-6 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn kernel_against_cosine_integrals() {
        // K = ½[Cin(2p(r+r')) − Cin(2p|r−r'|)], with Cin(x) = ∫₀^x (1 − cos t)/t dt.
        let cin = |x: f64| {
            integrate_with_breaks(
                &|t: f64| (1.0 - t.cos()) / t,
                &breaks_with_max_width(0.0, x, 1.0),
                &Tolerance::relative(1e-13),
            )
            .unwrap()
            .value
        };
        for p in [0.7, 10.0, 50.0] {
            let (r, rp) = (1.0, 0.5);
            let expected = 0.5 * (cin(2.0 * p * (r + rp)) - cin(2.0 * p * (r - rp)));
            let got = kernel_k(p, r, rp).unwrap();
            assert!((got - expected).abs() < 1e-9, "p {p}: {got} vs {expected}");
        }
    }

    #[test]
    fn interpolation_scan_reports_a_maximum() {
        let scan = squarewell_interpolation_scan(0.1, 20.0, 4000).unwrap();
        assert!(scan.max_rel_error > 0.0);
        let p = scan.p_at_max;
        let rel = |p: f64| {
            let a = squarewell_bracket_interpolated(p, 1.0);
            (squarewell_bracket_exact(p, 1.0) - a).abs() / a
        };
        assert!(rel(p) >= rel(p - 1e-3) && rel(p) >= rel(p + 1e-3));
    }

    #[test]
    fn mb_weight_used_by_gamma_is_normalized() {
        // The swapped-order oracle relies on ∫_{k/2}^∞ f p dp = (2πθ)^{-3/2} θ e^{-k²/8θ}.
        let theta = 3.0;
        let k = 1.7;
        let v = integrate(&|p: f64| maxwell_boltzmann_pdf(p, theta) * p, k / 2.0, 80.0, &Tolerance::relative(1e-13)).unwrap().value;
        let w = (2.0 * PI * theta).powf(-1.5) * theta * (-k * k / (8.0 * theta)).exp();
        assert!((v - w).abs() < 1e-12 * w);
    }
}
