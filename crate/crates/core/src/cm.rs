//! Collision-model coefficients from straight (or refracted) classical
//! trajectories, averaged over the collision flux
//! 8π² ν b p³ f(p) db dp.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GasParameters;
use crate::potentials::{PotentialKind, RadialPotential};
use crate::quadrature::{integrate_with_breaks, uniform_breaks, ErrorSlot, Estimate, Tolerance};
use crate::scalar::Real;

const MOMENTUM_PANELS: usize = 24;
const IMPACT_PANELS: usize = 8;
const INNER_REL_TOL: f64 = 1e-13;
const OUTER_REL_TOL: f64 = 1e-11;

/// c1 = <U0 tau / t_free> and c2 = <U0² tau² / t_free>.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmCoefficients<T> {
    pub c1: T,
    pub c1_error: T,
    pub c2: T,
    pub c2_error: T,
    pub c1_closed: Option<T>,
    pub c2_closed: Option<T>,
}

pub fn cm_coefficients<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>) -> Result<CmCoefficients<T>> {
    let c1 = cm_c1_estimate(pot, gas)?;
    let c2 = cm_c2_estimate(pot, gas)?;
    let u = pot.strength();
    let (c1_closed, c2_closed) = match pot.kind() {
        PotentialKind::Gaussian | PotentialKind::SquareWell => (Some(c1_closed_form(pot, gas)?), c2_closed_form(pot, gas, u)),
        PotentialKind::Tabulated => (Some(c1_closed_form(pot, gas)?), None),
    };
    Ok(CmCoefficients {
        c1: c1.value,
        c1_error: c1.error,
        c2: c2.value,
        c2_error: c2.error,
        c1_closed,
        c2_closed,
    })
}

/// ∫₀^{b_max} db ∫₀^{p_max} dp 8π² ν b p³ f(p) h(p, b, pJ(b)).
///
/// The path integral p·J is computed once per impact parameter and handed
/// to `h`. The b integral is adaptive; each inner p integral starts from
/// fixed panels plus `extra_breaks`.
pub(crate) fn flux_average<T, H>(
    pot: &RadialPotential<T>,
    gas: &GasParameters<T>,
    extra_breaks: &[T],
    h: H,
) -> Result<Estimate<T>>
where
    T: Real,
    H: Fn(T, T, T) -> T,
{
    let p_max = gas.p_max();
    let mut p_breaks = uniform_breaks(T::zero(), p_max, MOMENTUM_PANELS);
    p_breaks.extend(extra_breaks.iter().copied().filter(|&x| x > T::zero() && x < p_max));
    p_breaks.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    p_breaks.dedup();

    let inner_tol = Tolerance::relative(INNER_REL_TOL);
    let slot = ErrorSlot::new();
    let outer = |b: T| {
        let jz = slot.guard(pot.path_integral(b));
        if jz == T::zero() {
            return T::zero();
        }
        let inner = integrate_with_breaks(&|p: T| p * p * p * gas.mb_pdf(p) * h(p, b, jz), &p_breaks, &inner_tol)
            .map(|e| e.value)
            .map_err(Error::from);
        b * slot.guard(inner)
    };
    let b_max = pot.cutoff_radius();
    let est = integrate_with_breaks(
        &outer,
        &uniform_breaks(T::zero(), b_max, IMPACT_PANELS),
        &Tolerance::relative(OUTER_REL_TOL).with_max_subdivisions(4000),
    );
    if let Some(e) = slot.take() {
        return Err(e);
    }
    let est = est?;
    let prefactor = T::lit(8.0) * T::pi() * T::pi() * gas.nu;
    Ok(Estimate {
        value: prefactor * est.value,
        error: prefactor * est.error.abs() + T::tol(INNER_REL_TOL) * (prefactor * est.value).abs(),
        evaluations: est.evaluations,
    })
}

/// Lamb-shift coefficient <U0 tau / t_free>.
pub fn cm_c1<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>) -> Result<T> {
    Ok(cm_c1_estimate(pot, gas)?.value)
}

pub fn cm_c1_estimate<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>) -> Result<Estimate<T>> {
    if gas.nu == T::zero() || pot.strength() == T::zero() {
        return Ok(Estimate::zero());
    }
    flux_average(pot, gas, &[], |p, _b, jz| jz / p)
}

/// Dissipator coefficient <U0² tau² / t_free>.
pub fn cm_c2<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>) -> Result<T> {
    Ok(cm_c2_estimate(pot, gas)?.value)
}

pub fn cm_c2_estimate<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>) -> Result<Estimate<T>> {
    if gas.nu == T::zero() || pot.strength() == T::zero() {
        return Ok(Estimate::zero());
    }
    flux_average(pot, gas, &[], |p, _b, jz| {
        let j = jz / p;
        j * j
    })
}

/// ν ∫ V d³r, the value c1 takes for every potential.
pub fn c1_closed_form<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>) -> Result<T> {
    Ok(gas.nu * pot.volume_integral()?)
}

/// Gaussian (2π)^{3/2} ν u²/√θ; square well 2√(2π) ν u²/√θ.
pub fn c2_closed_form<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>, u: T) -> Option<T> {
    let base = gas.nu * u * u / gas.theta.sqrt();
    match pot.kind() {
        PotentialKind::Gaussian => Some(T::two_pi().powf(T::lit(1.5)) * base),
        PotentialKind::SquareWell => Some(T::lit(2.0) * T::two_pi().sqrt() * base),
        PotentialKind::Tabulated => None,
    }
}

/// c2 through the logarithmic kernel:
/// 16π² ν ∫ f p dp ∫∫ V(r) V(r') r r' ln((r + r')/|r − r'|) dr dr'.
///
/// The inner r' integral is split at r' = r and each half is mapped by
/// r' = r ∓ w s², which turns the logarithmic singularity into s ln s.
/// For tables every node is a break in both integrals, so the cost grows
/// with the square of the node count (about 15 s for 800 nodes).
pub fn cm_c2_logkernel<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>) -> Result<T> {
    if gas.nu == T::zero() || pot.strength() == T::zero() {
        return Ok(T::zero());
    }
    let radius = pot.cutoff_radius();
    let p_max = gas.p_max();
    let p_part = integrate_with_breaks(
        &|p: T| gas.mb_pdf(p) * p,
        &uniform_breaks(T::zero(), p_max, MOMENTUM_PANELS),
        &Tolerance::relative(INNER_REL_TOL),
    )?
    .value;

    let nodes: &[T] = match pot {
        RadialPotential::Tabulated(t) => t.radii(),
        _ => &[],
    };
    let r_breaks = uniform_breaks(T::zero(), radius, IMPACT_PANELS);
    let scale = integrate_with_breaks(&|r: T| pot.value(r).abs() * r, &r_breaks, &Tolerance::relative(1e-6))?.value;
    let inner_tol = Tolerance::relative(1e-12)
        .with_abs(T::tol(1e-14) * scale)
        .with_max_subdivisions(4000);
    let two = T::lit(2.0);
    let slot = ErrorSlot::new();
    let inner = |r: T| -> T {
        let vr = pot.value(r);
        if vr == T::zero() {
            return T::zero();
        }
        let span = radius - r;
        // Table nodes mapped to s, so that every panel is smooth.
        let (mut left_breaks, mut right_breaks) = (vec![T::zero(), T::one()], vec![T::zero(), T::one()]);
        for &node in nodes {
            if node < r {
                left_breaks.push(((r - node) / r).sqrt());
            } else if node > r && node < radius {
                right_breaks.push(((node - r) / span).sqrt());
            }
        }
        for b in [&mut left_breaks, &mut right_breaks] {
            b.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
            b.dedup();
        }
        let left = integrate_with_breaks(
            &|s: T| {
                let w = r * s * s;
                let rp = r - w;
                pot.value(rp) * rp * ((r + rp) / w).ln() * two * r * s
            },
            &left_breaks,
            &inner_tol,
        );
        let right = integrate_with_breaks(
            &|s: T| {
                let w = span * s * s;
                let rp = r + w;
                pot.value(rp) * rp * ((r + rp) / w).ln() * two * span * s
            },
            &right_breaks,
            &inner_tol,
        );
        let left = slot.guard(left.map(|e| e.value).map_err(Error::from));
        let right = slot.guard(right.map(|e| e.value).map_err(Error::from));
        vr * r * (left + right)
    };
    let double = integrate_with_breaks(
        &inner,
        &r_breaks,
        &Tolerance::relative(1e-11).with_abs(T::tol(1e-14) * scale * scale).with_max_subdivisions(4000),
    );
    if let Some(e) = slot.take() {
        return Err(e);
    }
    let double = double?.value;
    Ok(T::lit(16.0) * T::pi() * T::pi() * gas.nu * p_part * double)
}

/// Square-well collision time with refraction by the mean-field well
/// ⟨F⟩u: tau = 2 sqrt((1 − b²) p² + 2a) / (p² + 2a), a = −⟨F⟩u.
pub fn refracted_tau<T: Real>(p: T, b: T, a: T) -> T {
    if b >= T::one() {
        return T::zero();
    }
    let two_a = T::lit(2.0) * a;
    T::lit(2.0) * ((T::one() - b * b) * p * p + two_a).sqrt() / (p * p + two_a)
}

fn refraction_strength<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>, f_expect: T) -> Result<T> {
    if pot.kind() != PotentialKind::SquareWell {
        return Err(Error::Unsupported(format!(
            "refracted trajectories are only modelled for the square well, not {}",
            pot.kind()
        )));
    }
    let fu = f_expect * pot.strength();
    if fu > T::zero() {
        return Err(Error::InvalidParameter(format!(
            "refraction needs <F> u <= 0 (an attractive mean field), got {fu}"
        )));
    }
    if fu.abs() / gas.theta >= T::lit(0.5) {
        log::warn!(
            "|<F> u| / theta = {} is outside the small-refraction range",
            (fu.abs() / gas.theta).as_f64()
        );
    }
    Ok(-fu)
}

/// (c1, c2) with the refracted square-well collision time. ⟨F⟩ is a fixed
/// scalar input; ⟨F⟩ = 0 or u = 0 reproduces [`cm_c1`] and [`cm_c2`].
pub fn cm_refracted<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>, f_expect: T) -> Result<(T, T)> {
    let a = refraction_strength(pot, gas, f_expect)?;
    if a == T::zero() {
        return Ok((cm_c1(pot, gas)?, cm_c2(pot, gas)?));
    }
    let u = pot.strength();
    let root = a.sqrt();
    let breaks = [root, T::lit(4.0) * root, T::lit(16.0) * root];
    let c1 = flux_average(pot, gas, &breaks, |p, b, _| u * refracted_tau(p, b, a))?;
    let c2 = flux_average(pot, gas, &breaks, |p, b, _| {
        let j = u * refracted_tau(p, b, a);
        j * j
    })?;
    Ok((c1.value, c2.value))
}

impl<T: Real> Estimate<T> {
    pub(crate) fn zero() -> Self {
        Estimate {
            value: T::zero(),
            error: T::zero(),
            evaluations: 0,
        }
    }
}
