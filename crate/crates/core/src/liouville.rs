//! GKSL generators and density-matrix propagation.
//!
//! Superoperators use the column-stacking convention: vec(ρ) stacks the
//! columns of ρ, so vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ). This matches the
//! column-major storage of nalgebra matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DensityMatrix, SpinModel};
use crate::scalar::{cplx, hermitian_eigenvalues, hermiticity_defect, trace, CMatrix, Real};

/// Largest system dimension propagated through the dense superoperator
/// exponential.
pub const EXPM_MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Channel<T: Real> {
    pub rate: T,
    pub jump: CMatrix<T>,
}

/// dρ/dt = −i[H_eff, ρ] + Σ_k γ_k (A_k ρ A_k† − ½{A_k† A_k, ρ}).
#[derive(Debug, Clone, PartialEq)]
pub struct GkslGenerator<T: Real> {
    h_eff: CMatrix<T>,
    channels: Vec<Channel<T>>,
}

impl<T: Real> GkslGenerator<T> {
    pub fn new(h_eff: CMatrix<T>, channels: Vec<Channel<T>>) -> Result<Self> {
        if !h_eff.is_square() {
            return Err(Error::DimensionMismatch(format!("H_eff is {:?}", h_eff.shape())));
        }
        let defect = hermiticity_defect(&h_eff);
        if !(defect <= T::tol(1e-12)) {
            return Err(Error::NotHermitian {
                name: "h_eff".into(),
                defect: defect.as_f64(),
            });
        }
        let d = h_eff.nrows();
        for c in &channels {
            if !(c.rate >= T::zero()) || !c.rate.is_finite() {
                return Err(Error::InvalidParameter(format!("channel rate must be >= 0, got {}", c.rate)));
            }
            if c.jump.shape() != (d, d) {
                return Err(Error::DimensionMismatch(format!(
                    "jump operator is {:?}, expected {d}x{d}",
                    c.jump.shape()
                )));
            }
        }
        Ok(Self { h_eff, channels })
    }

    pub fn dim(&self) -> usize {
        self.h_eff.nrows()
    }

    pub fn h_eff(&self) -> &CMatrix<T> {
        &self.h_eff
    }

    pub fn channels(&self) -> &[Channel<T>] {
        &self.channels
    }

    /// −i[H_eff, ρ].
    pub fn hamiltonian_apply(&self, rho: &CMatrix<T>) -> CMatrix<T> {
        let comm = &self.h_eff * rho - rho * &self.h_eff;
        comm * cplx(T::zero(), -T::one())
    }

    /// The dissipator alone.
    pub fn dissipator_apply(&self, rho: &CMatrix<T>) -> CMatrix<T> {
        let d = self.dim();
        let mut out = CMatrix::zeros(d, d);
        let half = cplx(T::lit(0.5), T::zero());
        for c in &self.channels {
            if c.rate == T::zero() {
                continue;
            }
            let a = &c.jump;
            let ad = a.adjoint();
            let ada = &ad * a;
            let term = a * rho * &ad - (&ada * rho + rho * &ada) * half;
            out += term * cplx(c.rate, T::zero());
        }
        out
    }

    /// L[ρ].
    pub fn apply(&self, rho: &CMatrix<T>) -> CMatrix<T> {
        self.hamiltonian_apply(rho) + self.dissipator_apply(rho)
    }

    /// Dense d² × d² matrix of L acting on column-stacked vec(ρ).
    pub fn liouvillian(&self) -> CMatrix<T> {
        let d = self.dim();
        let id = CMatrix::<T>::identity(d, d);
        let minus_i = cplx(T::zero(), -T::one());
        let mut l = (id.kronecker(&self.h_eff) - self.h_eff.transpose().kronecker(&id)) * minus_i;
        let half = cplx(T::lit(0.5), T::zero());
        for c in &self.channels {
            if c.rate == T::zero() {
                continue;
            }
            let a = &c.jump;
            let ada = a.adjoint() * a;
            let term = a.conjugate().kronecker(a) - (id.kronecker(&ada) + ada.transpose().kronecker(&id)) * half;
            l += term * cplx(c.rate, T::zero());
        }
        l
    }
}

/// Generator with Lamb shift `lamb` and channels (rate·μ_j, A_ij); channels
/// with zero weight are dropped.
pub fn build_generator<T: Real>(model: &SpinModel<T>, lamb: &CMatrix<T>, rate: T) -> Result<GkslGenerator<T>> {
    if !(rate >= T::zero()) || !rate.is_finite() {
        return Err(Error::InvalidParameter(format!("rate must be >= 0, got {rate}")));
    }
    if lamb.shape() != model.h_s().shape() {
        return Err(Error::DimensionMismatch(format!(
            "Lamb shift is {:?}, system is {:?}",
            lamb.shape(),
            model.h_s().shape()
        )));
    }
    let mut channels = Vec::new();
    for ((_, j), a) in model.jump_operators().iter() {
        let w = rate * model.mu()[j];
        if w > T::zero() {
            channels.push(Channel { rate: w, jump: a.clone() });
        }
    }
    GkslGenerator::new(model.h_s() + lamb, channels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Dense superoperator exponential.
    Expm,
    /// Dormand–Prince 5(4) with adaptive steps.
    RkAdaptive,
}

/// Tolerances for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkOptions<T> {
    pub rel: T,
    pub abs: T,
    pub max_steps: usize,
}

impl<T: Real> Default for RkOptions<T> {
    fn default() -> Self {
        Self {
            rel: T::tol(1e-11),
            abs: T::tol(1e-13),
            max_steps: 10_000_000,
        }
    }
}

/// States on a time grid plus integrator bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<DensityMatrix<T>>,
    /// Set when the trace drifted by more than 1e-12 and was renormalized.
    pub trace_renormalized: bool,
    pub steps: usize,
}

/// ρ(t) = e^{L t} ρ0.
pub fn evolve<T: Real>(gen: &GkslGenerator<T>, rho0: &DensityMatrix<T>, t: T, method: Method) -> Result<DensityMatrix<T>> {
    let mut traj = evolve_grid(gen, rho0, &[t], method)?;
    Ok(traj.states.pop().expect("one requested time"))
}

/// States at each time of an ascending, non-negative grid.
pub fn evolve_grid<T: Real>(gen: &GkslGenerator<T>, rho0: &DensityMatrix<T>, times: &[T], method: Method) -> Result<Trajectory<T>> {
    evolve_grid_with(gen, rho0, times, method, &RkOptions::default())
}

pub fn evolve_grid_with<T: Real>(
    gen: &GkslGenerator<T>,
    rho0: &DensityMatrix<T>,
    times: &[T],
    method: Method,
    opts: &RkOptions<T>,
) -> Result<Trajectory<T>> {
    if rho0.dim() != gen.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state is {}-dimensional, generator {}",
            rho0.dim(),
            gen.dim()
        )));
    }
    if times.iter().any(|&t| !(t >= T::zero()) || !t.is_finite()) {
        return Err(Error::InvalidParameter("times must be finite and >= 0".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("times must be ascending".into()));
    }
    match method {
        Method::Expm => evolve_expm(gen, rho0, times),
        Method::RkAdaptive => evolve_rk(gen, rho0, times, opts),
    }
}

fn vec_of<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    CMatrix::from_column_slice(m.len(), 1, m.as_slice())
}

fn unvec<T: Real>(v: &CMatrix<T>, d: usize) -> CMatrix<T> {
    CMatrix::from_column_slice(d, d, v.as_slice())
}

fn evolve_expm<T: Real>(gen: &GkslGenerator<T>, rho0: &DensityMatrix<T>, times: &[T]) -> Result<Trajectory<T>> {
    let d = gen.dim();
    if d > EXPM_MAX_DIM {
        return Err(Error::Unsupported(format!(
            "matrix exponential is limited to dim_s <= {EXPM_MAX_DIM}; use the adaptive integrator"
        )));
    }
    let l = gen.liouvillian();
    let mut states = Vec::with_capacity(times.len());
    let mut renormalized = false;
    let mut current = rho0.matrix().clone();
    let mut t_prev = T::zero();
    let mut cached: Option<(T, CMatrix<T>)> = None;
    for &t in times {
        let dt = t - t_prev;
        if dt > T::zero() {
            let prop = match &cached {
                Some((h, p)) if *h == dt => p.clone(),
                _ => {
                    let p = (&l * cplx(dt, T::zero())).exp();
                    cached = Some((dt, p.clone()));
                    p
                }
            };
            current = unvec(&(prop * vec_of(&current)), d);
            renormalized |= tidy(&mut current);
        }
        states.push(DensityMatrix::from_propagation(current.clone())?);
        t_prev = t;
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        trace_renormalized: renormalized,
        steps: times.len(),
    })
}

/// Re-Hermitizes in place and renormalizes the trace when it has drifted by
/// more than 1e-12. Returns whether renormalization happened.
fn tidy<T: Real>(rho: &mut CMatrix<T>) -> bool {
    let h = (&*rho + rho.adjoint()) * cplx(T::lit(0.5), T::zero());
    *rho = h;
    let tr = trace(rho).re;
    if (tr - T::one()).abs() > T::tol(1e-12) {
        *rho /= cplx(tr, T::zero());
        return true;
    }
    false
}

// Dormand–Prince 5(4) tableau. The generator is autonomous, so the
// stage times are not needed.
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn evolve_rk<T: Real>(gen: &GkslGenerator<T>, rho0: &DensityMatrix<T>, times: &[T], opts: &RkOptions<T>) -> Result<Trajectory<T>> {
    let d = gen.dim();
    let mut rho = rho0.matrix().clone();
    let mut t = T::zero();
    let mut states = Vec::with_capacity(times.len());
    let mut renormalized = false;
    let mut steps = 0usize;

    // Initial step from the generator's scale.
    let scale = gen.liouvillian_scale();
    let mut h = if scale > T::zero() { T::lit(0.01) / scale } else { T::one() };

    let mut k: Vec<CMatrix<T>> = vec![CMatrix::zeros(d, d); 7];
    k[0] = gen.apply(&rho);
    for &target in times {
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::StepUnderflow {
                    t: t.as_f64(),
                    h: h.as_f64(),
                });
            }
            let last = t + h >= target;
            let step = if last { target - t } else { h };
            for s in 1..7 {
                let mut y = rho.clone();
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = DP_A[s][j];
                    if a != 0.0 {
                        y += kj * cplx(step * T::lit(a), T::zero());
                    }
                }
                k[s] = gen.apply(&y);
            }
            let mut y5 = rho.clone();
            for (j, kj) in k.iter().enumerate().take(6) {
                let b = DP_A[6][j];
                if b != 0.0 {
                    y5 += kj * cplx(step * T::lit(b), T::zero());
                }
            }
            let mut err = CMatrix::zeros(d, d);
            for (j, kj) in k.iter().enumerate() {
                if DP_E[j] != 0.0 {
                    err += kj * cplx(step * T::lit(DP_E[j]), T::zero());
                }
            }
            let ymax = rho.iter().chain(y5.iter()).fold(T::zero(), |m, z| m.max(z.norm_sqr().sqrt()));
            let bound = opts.abs + opts.rel * ymax;
            let enorm = err.iter().fold(T::zero(), |m, z| m.max(z.norm_sqr().sqrt())) / bound;

            if enorm <= T::one() {
                t = if last { target } else { t + step };
                rho = y5;
                renormalized |= tidy(&mut rho);
                k[0] = gen.apply(&rho);
                steps += 1;
            }
            let factor = if enorm == T::zero() {
                T::lit(5.0)
            } else {
                (T::lit(0.9) * enorm.powf(T::lit(-0.2))).min(T::lit(5.0)).max(T::lit(0.2))
            };
            if !(enorm <= T::one() && last) {
                h = step * factor;
            }
            if h <= T::lit(1e-14) * t.abs().max(T::one()) {
                return Err(Error::StepUnderflow {
                    t: t.as_f64(),
                    h: h.as_f64(),
                });
            }
        }
        let lowest = hermitian_eigenvalues(&rho)[0];
        if lowest < T::lit(-1e-8) {
            return Err(Error::PositivityViolation {
                min_eigenvalue: lowest.as_f64(),
            });
        }
        states.push(DensityMatrix::from_propagation(rho.clone())?);
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        trace_renormalized: renormalized,
        steps,
    })
}

impl<T: Real> GkslGenerator<T> {
    /// Cheap upper bound on ‖L‖ used for the first step size.
    fn liouvillian_scale(&self) -> T {
        let fro = |m: &CMatrix<T>| m.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
        let mut s = T::lit(2.0) * fro(&self.h_eff);
        for c in &self.channels {
            let n = fro(&c.jump);
            s += T::lit(2.0) * c.rate * n * n;
        }
        s
    }
}
