//! Spherically symmetric system–particle potentials and the two integrals
//! built from them: the on-shell Born amplitude and the straight-line
//! trajectory integral.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_kronrod, integrate_with_breaks, Tolerance};
use crate::scalar::Real;

/// Requested relative accuracy for tabulated-potential integrals.
pub const TABLE_REL_TOL: f64 = 1e-9;

/// Impact-parameter cutoff used for potentials without compact support.
pub const GAUSSIAN_CUTOFF: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Gaussian,
    SquareWell,
    Tabulated,
}

impl std::fmt::Display for PotentialKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PotentialKind::Gaussian => "gaussian",
            PotentialKind::SquareWell => "square_well",
            PotentialKind::Tabulated => "tabulated",
        })
    }
}

/// V(r) in units of hbar²/(m d²), with r in units of d.
#[derive(Debug, Clone, PartialEq)]
pub enum RadialPotential<T: Real> {
    /// u exp(-r²/2)
    Gaussian { u: T },
    /// u for r <= 1, zero outside.
    SquareWell { u: T },
    Tabulated(TabulatedPotential<T>),
}

impl<T: Real> RadialPotential<T> {
    pub fn gaussian(u: T) -> Self {
        RadialPotential::Gaussian { u }
    }

    pub fn square_well(u: T) -> Self {
        RadialPotential::SquareWell { u }
    }

    pub fn kind(&self) -> PotentialKind {
        match self {
            RadialPotential::Gaussian { .. } => PotentialKind::Gaussian,
            RadialPotential::SquareWell { .. } => PotentialKind::SquareWell,
            RadialPotential::Tabulated(_) => PotentialKind::Tabulated,
        }
    }

    /// Characteristic strength u. For tables this is the sample of largest
    /// magnitude, sign included.
    pub fn strength(&self) -> T {
        match self {
            RadialPotential::Gaussian { u } | RadialPotential::SquareWell { u } => *u,
            RadialPotential::Tabulated(t) => t.strength(),
        }
    }

    /// The same shape multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        match self {
            RadialPotential::Gaussian { u } => RadialPotential::Gaussian { u: *u * factor },
            RadialPotential::SquareWell { u } => RadialPotential::SquareWell { u: *u * factor },
            RadialPotential::Tabulated(t) => RadialPotential::Tabulated(t.scaled(factor)),
        }
    }

    /// The same shape rescaled so that [`strength`](Self::strength) is `u`.
    pub fn with_strength(&self, u: T) -> Result<Self> {
        match self {
            RadialPotential::Gaussian { .. } => Ok(RadialPotential::Gaussian { u }),
            RadialPotential::SquareWell { .. } => Ok(RadialPotential::SquareWell { u }),
            RadialPotential::Tabulated(t) => {
                let s = t.strength();
                if s == T::zero() {
                    return Err(Error::InvalidParameter(
                        "cannot rescale an identically zero table".into(),
                    ));
                }
                Ok(RadialPotential::Tabulated(t.scaled(u / s)))
            }
        }
    }

    pub fn value(&self, r: T) -> T {
        match self {
            RadialPotential::Gaussian { u } => *u * (-r * r / T::lit(2.0)).exp(),
            RadialPotential::SquareWell { u } => {
                if r <= T::one() {
                    *u
                } else {
                    T::zero()
                }
            }
            RadialPotential::Tabulated(t) => t.value(r),
        }
    }

    /// Radius beyond which the potential is treated as zero. Doubles as the
    /// impact-parameter cutoff b_max.
    pub fn cutoff_radius(&self) -> T {
        match self {
            RadialPotential::Gaussian { .. } => T::lit(GAUSSIAN_CUTOFF),
            RadialPotential::SquareWell { .. } => T::one(),
            RadialPotential::Tabulated(t) => t.r_max(),
        }
    }

    /// Length over which the potential varies; sets quadrature panel widths
    /// in momentum-transfer space.
    pub(crate) fn feature_radius(&self) -> T {
        match self {
            RadialPotential::Gaussian { .. } => T::lit(4.0),
            RadialPotential::SquareWell { .. } => T::one(),
            RadialPotential::Tabulated(t) => t.r_max(),
        }
    }

    /// g(k) = ∫₀^∞ V(r) sin(k r) r dr, the radial Fourier integral at
    /// momentum transfer k.
    pub fn born_transform(&self, k: T) -> Result<T> {
        if !(k >= T::zero()) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!("momentum transfer must be >= 0, got {k}")));
        }
        Ok(match self {
            RadialPotential::Gaussian { u } => {
                T::two_pi().sqrt() * *u * k / T::lit(2.0) * (-k * k / T::lit(2.0)).exp()
            }
            RadialPotential::SquareWell { u } => {
                if k < T::lit(0.05) {
                    let k2 = k * k;
                    *u * k * (T::one() / T::lit(3.0) - k2 / T::lit(30.0) + k2 * k2 / T::lit(840.0)
                        - k2 * k2 * k2 / T::lit(45360.0))
                } else {
                    *u / k * (k.sin() / k - k.cos())
                }
            }
            RadialPotential::Tabulated(t) => t.born_transform(k)?,
        })
    }

    /// B(p, xi) = ∫₀^∞ V(r) sin(2 p r xi) r dr.
    pub fn born_amplitude(&self, p: T, xi: T) -> Result<T> {
        if !(p > T::zero()) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!("momentum must be > 0, got {p}")));
        }
        if !(xi >= T::zero() && xi <= T::one()) {
            return Err(Error::InvalidParameter(format!("xi must lie in [0, 1], got {xi}")));
        }
        self.born_transform(T::lit(2.0) * p * xi)
    }

    /// p J(p, b) = ∫ V(sqrt(b² + z²)) dz, which does not depend on p.
    pub fn path_integral(&self, b: T) -> Result<T> {
        if !(b >= T::zero()) || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("impact parameter must be >= 0, got {b}")));
        }
        Ok(match self {
            RadialPotential::Gaussian { u } => T::two_pi().sqrt() * *u * (-b * b / T::lit(2.0)).exp(),
            RadialPotential::SquareWell { u } => {
                if b >= T::one() {
                    T::zero()
                } else {
                    T::lit(2.0) * *u * (T::one() - b * b).sqrt()
                }
            }
            RadialPotential::Tabulated(t) => t.path_integral(b)?,
        })
    }

    /// J(p, b) = ∫ V(r(t)) dt along the straight line with speed p and
    /// impact parameter b, i.e. u·tau.
    pub fn line_integral(&self, p: T, b: T) -> Result<T> {
        if !(p > T::zero()) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!("momentum must be > 0, got {p}")));
        }
        Ok(self.path_integral(b)? / p)
    }

    /// ∫ V(r) d³r.
    pub fn volume_integral(&self) -> Result<T> {
        Ok(match self {
            RadialPotential::Gaussian { u } => T::two_pi().powf(T::lit(1.5)) * *u,
            RadialPotential::SquareWell { u } => T::lit(4.0) * T::pi() / T::lit(3.0) * *u,
            RadialPotential::Tabulated(t) => T::lit(4.0) * T::pi() * t.moment(2)?,
        })
    }
}

/// Born amplitude B(p, xi); see [`RadialPotential::born_amplitude`].
pub fn born_amplitude<T: Real>(pot: &RadialPotential<T>, p: T, xi: T) -> Result<T> {
    pot.born_amplitude(p, xi)
}

/// Straight-trajectory integral J(p, b); see [`RadialPotential::line_integral`].
pub fn line_integral<T: Real>(pot: &RadialPotential<T>, p: T, b: T) -> Result<T> {
    pot.line_integral(p, b)
}

/// Monotone piecewise-cubic (PCHIP) interpolant of sampled V(r).
///
/// Below the first sample V is held at its first value; beyond the last
/// sample it is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPotential<T: Real> {
    r: Vec<T>,
    v: Vec<T>,
    slopes: Vec<T>,
    // Scales for absolute error floors: ∫|V| dr and ∫|V| r dr.
    abs_m0: T,
    abs_m1: T,
}

impl<T: Real> TabulatedPotential<T> {
    pub fn new(r: Vec<T>, v: Vec<T>) -> Result<Self> {
        if r.len() != v.len() {
            return Err(Error::Table(format!("{} radii but {} values", r.len(), v.len())));
        }
        if r.len() < 2 {
            return Err(Error::Table("need at least two samples".into()));
        }
        if r.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Table("non-finite entry".into()));
        }
        if r[0] < T::zero() {
            return Err(Error::Table(format!("first radius {} is negative", r[0])));
        }
        if let Some(w) = r.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Table(format!(
                "radii must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let slopes = pchip_slopes(&r, &v);
        let mut abs_m0 = r[0] * v[0].abs();
        let mut abs_m1 = r[0] * r[0] * v[0].abs() / T::lit(2.0);
        for i in 0..r.len() - 1 {
            let h = r[i + 1] - r[i];
            abs_m0 += h * (v[i].abs() + v[i + 1].abs()) / T::lit(2.0);
            abs_m1 += h * (r[i] * v[i].abs() + r[i + 1] * v[i + 1].abs()) / T::lit(2.0);
        }
        Ok(Self {
            r,
            v,
            slopes,
            abs_m0,
            abs_m1,
        })
    }

    /// Samples `f` at `n` evenly spaced radii on `[r0, r1]`.
    pub fn sample<F: Fn(T) -> T>(f: F, r0: T, r1: T, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Table("need at least two samples".into()));
        }
        let h = (r1 - r0) / T::lit((n - 1) as f64);
        let r: Vec<T> = (0..n).map(|i| r0 + h * T::lit(i as f64)).collect();
        let v = r.iter().map(|&x| f(x)).collect();
        Self::new(r, v)
    }

    /// Reads a two-column `r, V` CSV. A non-numeric first row is treated as
    /// a header; lines starting with `#` are ignored.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut r = Vec::new();
        let mut v = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Table(e.to_string()))?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            if rec.len() != 2 {
                return Err(Error::Table(format!("row {} has {} columns, expected 2", line + 1, rec.len())));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(a), Ok(b)) => {
                    r.push(T::lit(a));
                    v.push(T::lit(b));
                }
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::Table(format!("row {} is not numeric: {:?}", line + 1, rec)));
                }
            }
        }
        Self::new(r, v)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::Table(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn radii(&self) -> &[T] {
        &self.r
    }

    pub fn values(&self) -> &[T] {
        &self.v
    }

    pub fn r_max(&self) -> T {
        self.r[self.r.len() - 1]
    }

    pub fn strength(&self) -> T {
        self.v
            .iter()
            .copied()
            .fold(T::zero(), |best, x| if x.abs() > best.abs() { x } else { best })
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            r: self.r.clone(),
            v: self.v.iter().map(|&x| x * factor).collect(),
            slopes: self.slopes.iter().map(|&x| x * factor).collect(),
            abs_m0: self.abs_m0 * factor.abs(),
            abs_m1: self.abs_m1 * factor.abs(),
        }
    }

    pub fn value(&self, x: T) -> T {
        let n = self.r.len();
        if x > self.r[n - 1] {
            return T::zero();
        }
        if x <= self.r[0] {
            return self.v[0];
        }
        let i = self.r.partition_point(|&ri| ri <= x).min(n - 1) - 1;
        let h = self.r[i + 1] - self.r[i];
        let t = (x - self.r[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * t3 - three * t2 + T::one();
        let h10 = t3 - two * t2 + t;
        let h01 = three * t2 - two * t3;
        let h11 = t3 - t2;
        h00 * self.v[i] + h10 * h * self.slopes[i] + h01 * self.v[i + 1] + h11 * h * self.slopes[i + 1]
    }

    /// Breakpoints covering `[0, r_max]`: zero plus every sample radius.
    fn support_breaks(&self) -> Vec<T> {
        let mut b = Vec::with_capacity(self.r.len() + 1);
        if self.r[0] > T::zero() {
            b.push(T::zero());
        }
        b.extend_from_slice(&self.r);
        b
    }

    fn tolerance(&self, abs_scale: T) -> Tolerance<T> {
        Tolerance::relative(TABLE_REL_TOL).with_abs(T::lit(1e-12) * abs_scale)
    }

    /// ∫₀^r_max V(r) r^n dr.
    pub fn moment(&self, n: i32) -> Result<T> {
        let scale = self.abs_m0 * self.r_max().powi(n).max(T::one());
        let est = integrate_with_breaks(&|x: T| self.value(x) * x.powi(n), &self.support_breaks(), &self.tolerance(scale))?;
        Ok(est.value)
    }

    /// Panels as (left end, width, cubic coefficients of V in r − left).
    /// The first panel carries the constant below the first sample.
    fn panels(&self) -> impl Iterator<Item = (T, T, [T; 4])> + '_ {
        let head = (self.r[0] > T::zero()).then(|| (T::zero(), self.r[0], [self.v[0], T::zero(), T::zero(), T::zero()]));
        head.into_iter().chain(self.r.windows(2).enumerate().map(move |(i, w)| {
            let h = w[1] - w[0];
            let (m0, m1) = (self.slopes[i], self.slopes[i + 1]);
            let delta = (self.v[i + 1] - self.v[i]) / h;
            let three = T::lit(3.0);
            let two = T::lit(2.0);
            (
                w[0],
                h,
                [self.v[i], m0, (three * delta - two * m0 - m1) / h, (m0 + m1 - two * delta) / (h * h)],
            )
        }))
    }

    /// ∫ V(r) sin(kr) r dr, panel by panel. On each panel V·r is a quartic,
    /// so repeated integration by parts terminates; panels with kh < 1,
    /// where that form cancels, use a fixed Gauss–Kronrod rule instead.
    fn born_transform(&self, k: T) -> Result<T> {
        if k == T::zero() {
            return Ok(T::zero());
        }
        let mut total = T::zero();
        for (a, h, c) in self.panels() {
            // q(s) = V(a + s)(a + s) = Σ d_j s^j.
            let d = [a * c[0], c[0] + a * c[1], c[1] + a * c[2], c[2] + a * c[3], c[3]];
            if k * h < T::one() {
                let q = |x: T| {
                    let s = x - a;
                    (((d[4] * s + d[3]) * s + d[2]) * s + d[1]) * s + d[0]
                };
                total += gauss_kronrod(&|x: T| q(x) * (k * x).sin(), a, a + h).0;
                continue;
            }
            let antiderivative = |s: T| {
                let q0 = (((d[4] * s + d[3]) * s + d[2]) * s + d[1]) * s + d[0];
                let q1 = ((T::lit(4.0) * d[4] * s + T::lit(3.0) * d[3]) * s + T::lit(2.0) * d[2]) * s + d[1];
                let q2 = (T::lit(12.0) * d[4] * s + T::lit(6.0) * d[3]) * s + T::lit(2.0) * d[2];
                let q3 = T::lit(24.0) * d[4] * s + T::lit(6.0) * d[3];
                let q4 = T::lit(24.0) * d[4];
                let (sn, cs) = (k * (a + s)).sin_cos();
                let k2 = k * k;
                -q0 * cs / k + q1 * sn / k2 + q2 * cs / (k2 * k) - q3 * sn / (k2 * k2) - q4 * cs / (k2 * k2 * k)
            };
            total += antiderivative(h) - antiderivative(T::zero());
        }
        Ok(total)
    }

    /// 2 ∫_b^R V(r) r / sqrt(r² − b²) dr, with r = b cosh s for b > 0.
    fn path_integral(&self, b: T) -> Result<T> {
        let rmax = self.r_max();
        if b >= rmax {
            return Ok(T::zero());
        }
        let tol = self.tolerance(T::lit(2.0) * self.abs_m0);
        let two = T::lit(2.0);
        if b == T::zero() {
            let est = integrate_with_breaks(&|x: T| self.value(x), &self.support_breaks(), &tol)?;
            return Ok(two * est.value);
        }
        let s_of = |r: T| (r / b).acosh();
        let mut breaks = vec![T::zero()];
        breaks.extend(self.r.iter().filter(|&&r| r > b).map(|&r| s_of(r)));
        let est = integrate_with_breaks(
            &|s: T| {
                let r = b * s.cosh();
                self.value(r) * r
            },
            &breaks,
            &tol,
        )?;
        Ok(two * est.value)
    }
}

/// Fritsch–Carlson derivative estimates with the shape-preserving
/// three-point end conditions.
fn pchip_slopes<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    let n = x.len();
    let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<T> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![T::zero(); n];
    for k in 1..n - 1 {
        let (d0, d1) = (delta[k - 1], delta[k]);
        if d0 * d1 <= T::zero() {
            continue;
        }
        let w1 = T::lit(2.0) * h[k] + h[k - 1];
        let w2 = h[k] + T::lit(2.0) * h[k - 1];
        d[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn end_slope<T: Real>(h0: T, h1: T, m0: T, m1: T) -> T {
    let d = ((T::lit(2.0) * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    let sign = |x: T| {
        if x > T::zero() {
            1
        } else if x < T::zero() {
            -1
        } else {
            0
        }
    };
    if sign(d) != sign(m0) {
        T::zero()
    } else if sign(m0) != sign(m1) && d.abs() > T::lit(3.0) * m0.abs() {
        T::lit(3.0) * m0
    } else {
        d
    }
}
