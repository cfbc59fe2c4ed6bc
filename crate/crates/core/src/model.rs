//! Unit conventions, gas parameters, the spin model and density matrices.
//!
//! Everything inside the crate is dimensionless with hbar = m = d = 1, where
//! `m` is the gas-particle mass and `d` the range of the system–particle
//! potential. Time is measured in m d²/hbar, energy in hbar²/(m d²) and
//! momentum in hbar/d. [`UnitSystem`] converts SI inputs once at ingestion.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cplx, hermitian_eigenvalues, hermitian_spectral_norm, hermiticity_defect, trace, CMatrix, Real};

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// SI anchor for the dimensionless convention: particle mass and potential
/// range. All conversions are pure and mutually inverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub mass_kg: f64,
    pub range_m: f64,
}

impl UnitSystem {
    pub fn new(mass_kg: f64, range_m: f64) -> Result<Self> {
        if !(mass_kg > 0.0 && mass_kg.is_finite() && range_m > 0.0 && range_m.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "unit system needs positive mass and range, got m = {mass_kg}, d = {range_m}"
            )));
        }
        Ok(Self { mass_kg, range_m })
    }

    /// hbar² / (m d²), in joules.
    pub fn energy_unit(&self) -> f64 {
        HBAR * HBAR / (self.mass_kg * self.range_m * self.range_m)
    }

    /// m d² / hbar, in seconds.
    pub fn time_unit(&self) -> f64 {
        self.mass_kg * self.range_m * self.range_m / HBAR
    }

    /// hbar / d, in kg m/s.
    pub fn momentum_unit(&self) -> f64 {
        HBAR / self.range_m
    }

    /// nu = n d³.
    pub fn density_to_nu(&self, per_m3: f64) -> f64 {
        per_m3 * self.range_m.powi(3)
    }

    pub fn nu_to_density(&self, nu: f64) -> f64 {
        nu / self.range_m.powi(3)
    }

    /// theta = k T m d² / hbar².
    pub fn temperature_to_theta(&self, kelvin: f64) -> f64 {
        BOLTZMANN * kelvin / self.energy_unit()
    }

    pub fn theta_to_temperature(&self, theta: f64) -> f64 {
        theta * self.energy_unit() / BOLTZMANN
    }

    /// u = U0 m d² / hbar².
    pub fn energy_to_u(&self, joule: f64) -> f64 {
        joule / self.energy_unit()
    }

    pub fn u_to_energy(&self, u: f64) -> f64 {
        u * self.energy_unit()
    }

    pub fn time_to_si(&self, t: f64) -> f64 {
        t * self.time_unit()
    }

    pub fn time_from_si(&self, seconds: f64) -> f64 {
        seconds / self.time_unit()
    }
}

/// Dimensionless gas state: density nu = n d³ and temperature
/// theta = k T m d² / hbar².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasParameters<T> {
    pub nu: T,
    pub theta: T,
}

impl<T: Real> GasParameters<T> {
    pub fn new(nu: T, theta: T) -> Result<Self> {
        if !(nu >= T::zero() && nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("density nu must be >= 0, got {nu}")));
        }
        if !(theta > T::zero() && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature theta must be > 0, got {theta}"
            )));
        }
        Ok(Self { nu, theta })
    }

    /// Same gas at another temperature.
    pub fn at_theta(&self, theta: T) -> Result<Self> {
        Self::new(self.nu, theta)
    }

    /// Maxwell–Boltzmann momentum density at |p| = `p`.
    pub fn mb_pdf(&self, p: T) -> T {
        maxwell_boltzmann_pdf(p, self.theta)
    }

    /// Mean speed <p> = sqrt(8 theta / pi).
    pub fn mean_momentum(&self) -> T {
        (T::lit(8.0) * self.theta / T::pi()).sqrt()
    }

    /// Upper momentum cutoff 12 sqrt(theta) used by every p quadrature.
    pub fn p_max(&self) -> T {
        T::lit(12.0) * self.theta.sqrt()
    }

    /// Validity-regime ratios for a potential of strength `u`.
    pub fn regime(&self, u: T) -> RegimeDiagnostics<T> {
        RegimeDiagnostics {
            dilute: self.nu,
            fast: T::one() / self.theta,
            born: u.abs() / self.theta.sqrt(),
            straight: u.abs() / self.theta,
        }
    }
}

/// Regime ratios; each must be much smaller than one for the generators to
/// be trustworthy.
///
/// * `dilute`: nu = n d³ (rare collisions, tau << t_free)
/// * `fast`: hbar²/(m d² kT), i.e. 1/theta
/// * `born`: |U0| sqrt(m d²/kT)/hbar, which is both the Born and the
///   stroboscopic condition
/// * `straight`: |U0|/kT (straight trajectories)
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeDiagnostics<T> {
    pub dilute: T,
    pub fast: T,
    pub born: T,
    pub straight: T,
}

impl<T: Real> RegimeDiagnostics<T> {
    pub fn worst(&self) -> T {
        self.dilute.max(self.fast).max(self.born).max(self.straight)
    }

    /// Names of the ratios that are not below one.
    pub fn violations(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        for (name, x) in [
            ("dilute", self.dilute),
            ("fast", self.fast),
            ("born", self.born),
            ("straight", self.straight),
        ] {
            if x >= T::one() {
                v.push(name);
            }
        }
        v
    }
}

/// Isotropic 3D Maxwell–Boltzmann density
/// f(p) = (2 pi theta)^{-3/2} exp(-p² / 2 theta).
pub fn maxwell_boltzmann_pdf<T: Real>(p: T, theta: T) -> T {
    (T::two_pi() * theta).powf(T::lit(-1.5)) * (-p * p / (T::lit(2.0) * theta)).exp()
}

/// System + particle internal model: H_S on the system, F on
/// system ⊗ particle, and the particle's diagonal internal state mu.
///
/// Composite indices are `k * dim_g + i` (system factor first), so
/// `F[(k*dim_g + i, l*dim_g + j)] = F_{ki,lj}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinModel<T: Real> {
    dim_s: usize,
    dim_g: usize,
    h_s: CMatrix<T>,
    f: CMatrix<T>,
    mu: Vec<T>,
}

impl<T: Real> SpinModel<T> {
    pub fn new(dim_s: usize, dim_g: usize, h_s: CMatrix<T>, f: CMatrix<T>, mu: Vec<T>) -> Result<Self> {
        if dim_s < 2 {
            return Err(Error::InvalidParameter(format!("dim_s must be >= 2, got {dim_s}")));
        }
        if dim_g < 1 {
            return Err(Error::InvalidParameter("dim_g must be >= 1".into()));
        }
        if h_s.shape() != (dim_s, dim_s) {
            return Err(Error::DimensionMismatch(format!(
                "h_s is {:?}, expected {dim_s}x{dim_s}",
                h_s.shape()
            )));
        }
        let n = dim_s * dim_g;
        if f.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "f is {:?}, expected {n}x{n} (dim_s * dim_g)",
                f.shape()
            )));
        }
        if mu.len() != dim_g {
            return Err(Error::DimensionMismatch(format!(
                "mu has {} weights, expected {dim_g}",
                mu.len()
            )));
        }
        check_hermitian("h_s", &h_s)?;
        check_hermitian("f", &f)?;
        if mu.iter().any(|&m| !(m >= T::zero()) || !m.is_finite()) {
            return Err(Error::InvalidParameter("mu weights must be finite and >= 0".into()));
        }
        let total = mu.iter().fold(T::zero(), |a, &b| a + b);
        if (total - T::one()).abs() > T::tol(1e-12) {
            return Err(Error::InvalidParameter(format!("mu must sum to 1, got {total}")));
        }
        Ok(Self {
            dim_s,
            dim_g,
            h_s,
            f,
            mu,
        })
    }

    pub fn dim_s(&self) -> usize {
        self.dim_s
    }

    pub fn dim_g(&self) -> usize {
        self.dim_g
    }

    pub fn h_s(&self) -> &CMatrix<T> {
        &self.h_s
    }

    pub fn f(&self) -> &CMatrix<T> {
        &self.f
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    /// Same model with a different system Hamiltonian.
    pub fn with_h_s(&self, h_s: CMatrix<T>) -> Result<Self> {
        Self::new(self.dim_s, self.dim_g, h_s, self.f.clone(), self.mu.clone())
    }

    /// A_ij = (I ⊗ <i|) F (I ⊗ |j>).
    pub fn jump_operator(&self, i: usize, j: usize) -> CMatrix<T> {
        particle_block(&self.f, self.dim_s, self.dim_g, i, j)
    }

    pub fn jump_operators(&self) -> JumpOperators<T> {
        // Shapes were validated at construction.
        jump_operators(&self.f, self.dim_s, self.dim_g).expect("validated model")
    }

    /// sum_i mu_i A_ii, the operator multiplying every first-order Lamb shift.
    pub fn mean_diagonal_jump(&self) -> CMatrix<T> {
        let mut acc = CMatrix::zeros(self.dim_s, self.dim_s);
        for (i, &m) in self.mu.iter().enumerate() {
            if m != T::zero() {
                acc += self.jump_operator(i, i) * cplx(m, T::zero());
            }
        }
        acc
    }

    /// sum_i mu_i (F²)_{·i,·i}, the second-order Lamb-shift operator.
    pub fn mean_diagonal_f_squared(&self) -> CMatrix<T> {
        let f2 = &self.f * &self.f;
        let mut acc = CMatrix::zeros(self.dim_s, self.dim_s);
        for (i, &m) in self.mu.iter().enumerate() {
            if m != T::zero() {
                acc += particle_block(&f2, self.dim_s, self.dim_g, i, i) * cplx(m, T::zero());
            }
        }
        acc
    }

    /// Spectral norm of F.
    pub fn interaction_norm(&self) -> T {
        hermitian_spectral_norm(&self.f)
    }
}

fn check_hermitian<T: Real>(name: &str, m: &CMatrix<T>) -> Result<()> {
    let defect = hermiticity_defect(m);
    if !(defect <= T::tol(1e-12)) {
        return Err(Error::NotHermitian {
            name: name.into(),
            defect: defect.as_f64(),
        });
    }
    Ok(())
}

/// (I ⊗ <i|) M (I ⊗ |j>) for M on system ⊗ particle.
pub fn particle_block<T: Real>(m: &CMatrix<T>, dim_s: usize, dim_g: usize, i: usize, j: usize) -> CMatrix<T> {
    CMatrix::from_fn(dim_s, dim_s, |k, l| m[(k * dim_g + i, l * dim_g + j)])
}

/// The dim_g² system operators A_ij extracted from F.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperators<T: Real> {
    dim_g: usize,
    ops: Vec<CMatrix<T>>,
}

impl<T: Real> JumpOperators<T> {
    pub fn get(&self, i: usize, j: usize) -> &CMatrix<T> {
        &self.ops[i * self.dim_g + j]
    }

    pub fn dim_g(&self) -> usize {
        self.dim_g
    }

    /// Iterates over `((i, j), A_ij)`.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &CMatrix<T>)> {
        let g = self.dim_g;
        self.ops.iter().enumerate().map(move |(n, a)| ((n / g, n % g), a))
    }
}

/// Splits F on system ⊗ particle into the blocks A_ij = <i|F|j>.
pub fn jump_operators<T: Real>(f: &CMatrix<T>, dim_s: usize, dim_g: usize) -> Result<JumpOperators<T>> {
    let n = dim_s * dim_g;
    if f.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "F is {:?}, expected {n}x{n} for dim_s = {dim_s}, dim_g = {dim_g}",
            f.shape()
        )));
    }
    let mut ops = Vec::with_capacity(dim_g * dim_g);
    for i in 0..dim_g {
        for j in 0..dim_g {
            ops.push(particle_block(f, dim_s, dim_g, i, j));
        }
    }
    Ok(JumpOperators { dim_g, ops })
}

/// A validated density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    rho: CMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn new(rho: CMatrix<T>) -> Result<Self> {
        Self::validated(rho, T::tol(1e-12), T::tol(1e-12), T::lit(-1e-10))
    }

    /// Accepts a propagated state: Hermiticity and trace to `1e-10`,
    /// positivity to `-1e-8`.
    pub(crate) fn from_propagation(rho: CMatrix<T>) -> Result<Self> {
        Self::validated(rho, T::tol(1e-10), T::tol(1e-10), T::lit(-1e-8))
    }

    fn validated(rho: CMatrix<T>, herm_tol: T, trace_tol: T, min_eig: T) -> Result<Self> {
        if !rho.is_square() || rho.nrows() == 0 {
            return Err(Error::InvalidState(format!("shape {:?} is not square", rho.shape())));
        }
        let defect = hermiticity_defect(&rho);
        if !(defect <= herm_tol) {
            return Err(Error::InvalidState(format!("not Hermitian (defect {:e})", defect.as_f64())));
        }
        let tr = trace(&rho);
        if !((tr.re - T::one()).abs() <= trace_tol && tr.im.abs() <= trace_tol) {
            return Err(Error::InvalidState(format!("trace {} + {}i is not 1", tr.re, tr.im)));
        }
        let lowest = hermitian_eigenvalues(&rho)[0];
        if !(lowest >= min_eig) {
            return Err(Error::PositivityViolation {
                min_eigenvalue: lowest.as_f64(),
            });
        }
        Ok(Self { rho })
    }

    /// |psi><psi| for a (not necessarily normalized) state vector.
    pub fn pure(psi: &[Complex<T>]) -> Result<Self> {
        let norm2 = psi.iter().fold(T::zero(), |a, z| a + z.norm_sqr());
        if !(norm2 > T::zero()) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let n = psi.len();
        let rho = CMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj() / cplx(norm2, T::zero()));
        Self::new(rho)
    }

    /// I / d.
    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        let w = T::one() / T::lit(dim as f64);
        Self::new(CMatrix::from_diagonal_element(dim, dim, cplx(w, T::zero())))
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.rho
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.rho
    }

    pub fn min_eigenvalue(&self) -> T {
        hermitian_eigenvalues(&self.rho)[0]
    }

    /// Half the trace norm of the difference.
    pub fn trace_distance(&self, other: &Self) -> T {
        trace_distance(&self.rho, &other.rho)
    }
}

/// ½‖a − b‖₁ for Hermitian `a`, `b`.
pub fn trace_distance<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> T {
    let d = a - b;
    // Symmetrize so the Hermitian eigensolver sees an exactly Hermitian input.
    let d = (&d + d.adjoint()) * cplx(T::lit(0.5), T::zero());
    T::lit(0.5) * hermitian_eigenvalues(&d).into_iter().fold(T::zero(), |a, x| a + x.abs())
}
