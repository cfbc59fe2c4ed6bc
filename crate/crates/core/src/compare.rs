//! LDL against CM across temperature.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cm::{cm_c1, cm_c2};
use crate::error::{Error, Result};
use crate::ldl::{gamma_quadrature, lamb_coefficient};
use crate::model::{GasParameters, SpinModel};
use crate::output::fmt17;
use crate::potentials::{PotentialKind, RadialPotential};
use crate::scalar::Real;

/// Temperatures below this are excluded from the monotonicity check.
pub const MONOTONE_FROM_THETA: f64 = 10.0;

/// One row of a temperature sweep. Numeric fields are NaN when `error` is
/// set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonRecord<T> {
    pub theta: T,
    pub gamma_ldl: T,
    pub gamma_ldl_closed: Option<T>,
    pub c2_cm: T,
    /// gamma_ldl / c2_cm.
    pub ratio: T,
    pub lamb_ldl_coeff: T,
    pub lamb_cm_coeff: T,
    pub hh_estimate: T,
    pub dd_estimate: T,
    pub error: Option<String>,
}

impl<T: Real> ComparisonRecord<T> {
    fn failed(theta: T, hh: T, dd: T, msg: String) -> Self {
        let nan = T::lit(f64::NAN);
        Self {
            theta,
            gamma_ldl: nan,
            gamma_ldl_closed: None,
            c2_cm: nan,
            ratio: nan,
            lamb_ldl_coeff: nan,
            lamb_cm_coeff: nan,
            hh_estimate: hh,
            dd_estimate: dd,
            error: Some(msg),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Relative discrepancy scales (hh for Lamb shifts, dd for dissipators).
///
/// hh = max(|u|‖F‖/θ, e^{−θ}/√θ) and dd = max(|u|‖F‖, 1)/θ, with ‖F‖ the
/// spectral norm. dd is relative to the dissipator scale
/// ν u² ‖F‖² / √θ. Both are orders of magnitude, not error bars.
pub fn discrepancy_estimates<T: Real>(model: &SpinModel<T>, gas: &GasParameters<T>, u: T) -> (T, T) {
    let coupling = u.abs() * model.interaction_norm();
    let hh = (coupling / gas.theta).max((-gas.theta).exp() / gas.theta.sqrt());
    let dd = coupling.max(T::one()) / gas.theta;
    (hh, dd)
}

fn gamma_closed<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>) -> Option<T> {
    let u = pot.strength();
    match pot.kind() {
        PotentialKind::Gaussian => Some(crate::ldl::gamma_gaussian_exact(gas, u)),
        PotentialKind::SquareWell => Some(crate::ldl::gamma_squarewell_fast(gas, u) * crate::ldl::squarewell_correction_factor(gas.theta)),
        PotentialKind::Tabulated => None,
    }
}

fn row<T: Real>(model: &SpinModel<T>, pot: &RadialPotential<T>, nu: T, theta: T) -> ComparisonRecord<T> {
    let u = pot.strength();
    let gas = match GasParameters::new(nu, theta) {
        Ok(g) => g,
        Err(e) => return ComparisonRecord::failed(theta, T::lit(f64::NAN), T::lit(f64::NAN), e.to_string()),
    };
    let (hh, dd) = discrepancy_estimates(model, &gas, u);
    let eval = || -> Result<ComparisonRecord<T>> {
        let gamma = gamma_quadrature(pot, &gas)?;
        let c2 = cm_c2(pot, &gas)?;
        if !(c2 > T::zero()) {
            return Err(Error::InvalidParameter("ratio is undefined when the CM dissipator vanishes".into()));
        }
        Ok(ComparisonRecord {
            theta,
            gamma_ldl: gamma,
            gamma_ldl_closed: gamma_closed(pot, &gas),
            c2_cm: c2,
            ratio: gamma / c2,
            lamb_ldl_coeff: lamb_coefficient(pot, &gas)?,
            lamb_cm_coeff: cm_c1(pot, &gas)?,
            hh_estimate: hh,
            dd_estimate: dd,
            error: None,
        })
    };
    eval().unwrap_or_else(|e| ComparisonRecord::failed(theta, hh, dd, e.to_string()))
}

/// One record per temperature, evaluated in parallel and returned in grid
/// order. Failed rows carry their error and the sweep continues.
///
/// For θ ≥ [`MONOTONE_FROM_THETA`], |ratio − 1| should not grow with θ.
/// A violation is logged for tabulated potentials; for the built-in
/// potentials the offending row is marked failed.
pub fn temperature_sweep<T: Real>(
    pot: &RadialPotential<T>,
    model: &SpinModel<T>,
    nu: T,
    u: T,
    theta_grid: &[T],
) -> Result<Vec<ComparisonRecord<T>>> {
    if theta_grid.iter().any(|&t| !(t > T::zero()) || !t.is_finite()) {
        return Err(Error::InvalidParameter("temperatures must be finite and positive".into()));
    }
    if theta_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("temperature grid must be strictly ascending".into()));
    }
    let pot = pot.with_strength(u)?;
    let mut rows: Vec<ComparisonRecord<T>> = theta_grid.par_iter().map(|&theta| row(model, &pot, nu, theta)).collect();

    let hard = pot.kind() != PotentialKind::Tabulated;
    let mut prev: Option<T> = None;
    for r in rows.iter_mut() {
        if !r.is_ok() || r.theta < T::lit(MONOTONE_FROM_THETA) {
            continue;
        }
        let dev = (r.ratio - T::one()).abs();
        if let Some(p) = prev {
            // Allow for quadrature noise once the deviation is tiny.
            if dev > p + T::tol(1e-9) {
                let msg = format!("|ratio - 1| grew to {} at theta = {} (previous {})", dev, r.theta, p);
                if hard {
                    r.error = Some(msg);
                } else {
                    log::warn!("{msg}");
                }
            }
        }
        prev = Some(dev);
    }
    Ok(rows)
}

pub const SWEEP_COLUMNS: [&str; 10] = [
    "theta",
    "gamma_ldl",
    "gamma_ldl_closed",
    "c2_cm",
    "ratio",
    "lamb_ldl_coeff",
    "lamb_cm_coeff",
    "hh_estimate",
    "dd_estimate",
    "error",
];

/// Sweep CSV. `params` are echoed as leading `# key=value` lines.
pub fn write_sweep_csv<T: Real, W: Write>(mut w: W, params: &[(&str, String)], rows: &[ComparisonRecord<T>]) -> io::Result<()> {
    for (k, v) in params {
        writeln!(w, "# {k}={v}")?;
    }
    writeln!(w, "{}", SWEEP_COLUMNS.join(","))?;
    let num = |x: T| fmt17(x.as_f64());
    for r in rows {
        let fields = [
            num(r.theta),
            num(r.gamma_ldl),
            r.gamma_ldl_closed.map_or_else(String::new, num),
            num(r.c2_cm),
            num(r.ratio),
            num(r.lamb_ldl_coeff),
            num(r.lamb_cm_coeff),
            num(r.hh_estimate),
            num(r.dd_estimate),
            r.error.as_deref().map_or_else(String::new, |e| format!("\"{}\"", e.replace('"', "'"))),
        ];
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}
