//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::{Complex, DMatrix, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar the toolkit is generic over (`f32` or `f64`).
///
/// Transcendental functions and constants come from [`RealField`]; conversion
/// to and from literals goes through `num-traits`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must be representable")
    }

    /// Lossy conversion to `f64`, used for diagnostics and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the scalar type.
    #[inline]
    fn eps() -> Self {
        Self::default_epsilon()
    }

    /// `max(requested, 16 eps)`: tolerances tighter than a few ulps are
    /// unreachable in the narrower instantiations.
    #[inline]
    fn tol(requested: f64) -> Self {
        Self::lit(requested).max(Self::eps() * Self::lit(16.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dense complex matrix over the scalar type.
pub type CMatrix<T> = DMatrix<Complex<T>>;

#[inline]
pub(crate) fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

/// `exp(i phi)`.
#[inline]
pub(crate) fn cis<T: Real>(phi: T) -> Complex<T> {
    Complex::new(phi.cos(), phi.sin())
}

/// Largest entrywise modulus of `m - m†`.
pub fn hermiticity_defect<T: Real>(m: &CMatrix<T>) -> T {
    let n = m.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in 0..n {
            let d = m[(i, j)] - m[(j, i)].conj();
            worst = worst.max(d.norm_sqr().sqrt());
        }
    }
    worst
}

/// Trace of a square complex matrix.
pub fn trace<T: Real>(m: &CMatrix<T>) -> Complex<T> {
    let mut t = Complex::new(T::zero(), T::zero());
    for i in 0..m.nrows().min(m.ncols()) {
        t += m[(i, i)];
    }
    t
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues<T: Real>(m: &CMatrix<T>) -> Vec<T> {
    let mut ev: Vec<T> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Spectral norm of a Hermitian matrix (largest eigenvalue modulus).
pub fn hermitian_spectral_norm<T: Real>(m: &CMatrix<T>) -> T {
    hermitian_eigenvalues(m)
        .into_iter()
        .fold(T::zero(), |acc, x| acc.max(x.abs()))
}
