//! Adaptive Gauss–Kronrod (G10/K21) quadrature.
//!
//! All integrals in the crate go through this module. The integrator is a
//! global adaptive bisection scheme in the style of QUADPACK's `qag`, seeded
//! with caller-supplied breakpoints so oscillatory or kinked integrands can be
//! pre-split into panels. Panel sums are always reduced in index order, which
//! keeps results bitwise independent of how many threads evaluated them.

use std::sync::Mutex;

use rayon::prelude::*;

use crate::error::QuadratureError;
use crate::scalar::Real;

// 21-point Kronrod abscissae (positive half, descending), with the embedded
// 10-point Gauss rule on the odd-indexed nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_548_289_127_095,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Convergence request: stop when `error <= max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance<T> {
    pub rel: T,
    pub abs: T,
    pub max_subdivisions: usize,
}

impl<T: Real> Tolerance<T> {
    /// Relative tolerance with no absolute floor. The requested value is
    /// clamped to what the scalar type can resolve.
    pub fn relative(rel: f64) -> Self {
        Self {
            rel: T::tol(rel),
            abs: T::zero(),
            max_subdivisions: 2000,
        }
    }

    pub fn with_abs(mut self, abs: T) -> Self {
        self.abs = abs;
        self
    }

    pub fn with_max_subdivisions(mut self, n: usize) -> Self {
        self.max_subdivisions = n;
        self
    }

    pub(crate) fn target(&self, value: T) -> T {
        self.abs.max(self.rel * value.abs())
    }
}

/// Integral value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: T,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
    roundoff_limited: bool,
}

/// One G10/K21 panel: returns (kronrod value, error estimate, roundoff flag).
pub(crate) fn gauss_kronrod<T: Real, F: Fn(T) -> T + ?Sized>(f: &F, a: T, b: T) -> (T, T, bool) {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let abs_half = half_len.abs();

    let f_center = f(center);
    let mut res_g = T::zero();
    let mut res_k = f_center * T::lit(WGK[10]);
    let mut res_abs = res_k.abs();
    let mut fv1 = [T::zero(); 10];
    let mut fv2 = [T::zero(); 10];

    for j in 0..5 {
        let jtw = 2 * j + 1;
        let dx = half_len * T::lit(XGK[jtw]);
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_g += T::lit(WG[j]) * (f1 + f2);
        res_k += T::lit(WGK[jtw]) * (f1 + f2);
        res_abs += T::lit(WGK[jtw]) * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let dx = half_len * T::lit(XGK[jtwm1]);
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        res_k += T::lit(WGK[jtwm1]) * (f1 + f2);
        res_abs += T::lit(WGK[jtwm1]) * (f1.abs() + f2.abs());
    }

    let mean = res_k * half;
    let mut res_asc = T::lit(WGK[10]) * (f_center - mean).abs();
    for j in 0..10 {
        res_asc += T::lit(WGK[j]) * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let value = res_k * half_len;
    let res_abs = res_abs * abs_half;
    let res_asc = res_asc * abs_half;
    let mut err = ((res_k - res_g) * half_len).abs();

    if res_asc != T::zero() && err != T::zero() {
        let scale = (T::lit(200.0) * err / res_asc).powf(T::lit(1.5));
        err = if scale < T::one() { res_asc * scale } else { res_asc };
    }
    let floor = T::lit(50.0) * T::eps() * res_abs;
    let roundoff_limited = err <= floor;
    if roundoff_limited {
        err = floor;
    }
    (value, err, roundoff_limited)
}

fn make_segment<T: Real, F: Fn(T) -> T + ?Sized>(
    f: &F,
    a: T,
    b: T,
) -> Result<Segment<T>, QuadratureError> {
    let (value, error, roundoff_limited) = gauss_kronrod(f, a, b);
    if !value.is_finite() || !error.is_finite() {
        return Err(QuadratureError::NonFinite {
            at: (T::lit(0.5) * (a + b)).as_f64(),
        });
    }
    // Panels narrower than a few ulps of their position cannot be split.
    let width_floor = T::lit(64.0) * T::eps() * a.abs().max(b.abs());
    Ok(Segment {
        a,
        b,
        value,
        error,
        roundoff_limited: roundoff_limited || (b - a).abs() <= width_floor,
    })
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<T: Real, F: Fn(T) -> T + ?Sized>(
    f: &F,
    a: T,
    b: T,
    tol: &Tolerance<T>,
) -> Result<Estimate<T>, QuadratureError> {
    integrate_with_breaks(f, &[a, b], tol)
}

/// Integrates `f` over `[breaks[0], breaks[last]]`, using the interior
/// breakpoints as the initial panel decomposition.
///
/// Breakpoints must be non-decreasing; zero-width panels are skipped.
pub fn integrate_with_breaks<T: Real, F: Fn(T) -> T + ?Sized>(
    f: &F,
    breaks: &[T],
    tol: &Tolerance<T>,
) -> Result<Estimate<T>, QuadratureError> {
    let mut segments: Vec<Segment<T>> = Vec::with_capacity(breaks.len() + 16);
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            segments.push(make_segment(f, w[0], w[1])?);
        }
    }
    let mut evaluations = 21 * segments.len();
    if segments.is_empty() {
        return Ok(Estimate {
            value: T::zero(),
            error: T::zero(),
            evaluations: 0,
        });
    }

    loop {
        let (value, error) = segments
            .iter()
            .fold((T::zero(), T::zero()), |(v, e), s| (v + s.value, e + s.error));
        let target = tol.target(value);
        if error <= target {
            return Ok(Estimate {
                value,
                error,
                evaluations,
            });
        }

        let worst = segments
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.roundoff_limited)
            .max_by(|x, y| {
                x.1.error
                    .partial_cmp(&y.1.error)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|(i, _)| i);

        let Some(idx) = worst else {
            // Every remaining panel sits at the roundoff floor: the estimate
            // is as good as the arithmetic allows. Accept it only if the
            // floor itself meets the request.
            let floor: T = segments
                .iter()
                .fold(T::zero(), |acc, s| acc + s.error);
            if floor <= target.max(T::lit(64.0) * T::eps() * value.abs()) {
                return Ok(Estimate {
                    value,
                    error,
                    evaluations,
                });
            }
            return Err(QuadratureError::NotConverged {
                estimate: value.as_f64(),
                error: error.as_f64(),
                requested: target.as_f64(),
                subdivisions: segments.len(),
            });
        };

        if segments.len() >= tol.max_subdivisions {
            return Err(QuadratureError::NotConverged {
                estimate: value.as_f64(),
                error: error.as_f64(),
                requested: target.as_f64(),
                subdivisions: segments.len(),
            });
        }

        let s = segments[idx];
        let mid = T::lit(0.5) * (s.a + s.b);
        let left = make_segment(f, s.a, mid)?;
        let right = make_segment(f, mid, s.b)?;
        evaluations += 42;
        segments[idx] = left;
        segments.push(right);
    }
}

/// Integrates each panel `[breaks[i], breaks[i+1]]` independently (in
/// parallel), then sums the panels in index order.
///
/// Each panel receives the full relative tolerance and an equal share of the
/// absolute one. Intended for integrands of fixed sign, where per-panel
/// relative accuracy implies global relative accuracy.
pub fn integrate_panels<T, F>(
    f: &F,
    breaks: &[T],
    tol: &Tolerance<T>,
) -> Result<Estimate<T>, QuadratureError>
where
    T: Real,
    F: Fn(T) -> T + Sync + ?Sized,
{
    let panels = panel_integrals(f, breaks, tol)?;
    Ok(panels.into_iter().fold(
        Estimate {
            value: T::zero(),
            error: T::zero(),
            evaluations: 0,
        },
        |acc, p| Estimate {
            value: acc.value + p.value,
            error: acc.error + p.error,
            evaluations: acc.evaluations + p.evaluations,
        },
    ))
}

/// Per-panel estimates for `integrate_panels`, in panel order.
pub fn panel_integrals<T, F>(
    f: &F,
    breaks: &[T],
    tol: &Tolerance<T>,
) -> Result<Vec<Estimate<T>>, QuadratureError>
where
    T: Real,
    F: Fn(T) -> T + Sync + ?Sized,
{
    if breaks.len() < 2 {
        return Ok(Vec::new());
    }
    let n = breaks.len() - 1;
    let share = Tolerance {
        rel: tol.rel,
        abs: tol.abs / T::lit(n as f64),
        max_subdivisions: tol.max_subdivisions,
    };
    (0..n)
        .into_par_iter()
        .map(|i| integrate(f, breaks[i], breaks[i + 1], &share))
        .collect()
}

/// Evenly spaced breakpoints `a, a+h, ..., b` with `n` panels.
pub fn uniform_breaks<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    let n = n.max(1);
    let h = (b - a) / T::lit(n as f64);
    let mut v: Vec<T> = (0..n).map(|i| a + h * T::lit(i as f64)).collect();
    v.push(b);
    v
}

/// Breakpoints on `[a, b]` no further apart than `max_width`.
pub fn breaks_with_max_width<T: Real>(a: T, b: T, max_width: T) -> Vec<T> {
    if !(max_width > T::zero()) || !max_width.is_finite() || b <= a {
        return vec![a, b];
    }
    let n = ((b - a) / max_width).ceil().as_f64().max(1.0) as usize;
    uniform_breaks(a, b, n)
}

/// Collects the first error raised inside an integrand closure.
///
/// Integrands handed to the quadrature engine must return plain scalars, so
/// fallible inner computations report through this slot and return NaN; the
/// caller checks the slot before trusting the integral.
pub(crate) struct ErrorSlot<E> {
    slot: Mutex<Option<E>>,
}

impl<E> ErrorSlot<E> {
    pub(crate) fn new() -> Self {
        Self {
            slot: Mutex::new(None),
        }
    }

    pub(crate) fn guard<T: Real>(&self, r: Result<T, E>) -> T {
        match r {
            Ok(v) => v,
            Err(e) => {
                let mut g = self.slot.lock().expect("error slot poisoned");
                if g.is_none() {
                    *g = Some(e);
                }
                T::lit(f64::NAN)
            }
        }
    }

    pub(crate) fn take(&self) -> Option<E> {
        self.slot.lock().expect("error slot poisoned").take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_rule_is_exact_for_degree_31() {
        let f = |x: f64| x.powi(30) + 3.0 * x.powi(31);
        let (v, _, _) = gauss_kronrod(&f, -1.0, 1.0);
        assert!((v - 2.0 / 31.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_weights_sum_to_two() {
        let s: f64 = 2.0 * WG.iter().sum::<f64>();
        assert!((s - 2.0).abs() < 1e-15);
        let sk: f64 = 2.0 * WGK[..10].iter().sum::<f64>() + WGK[10];
        assert!((sk - 2.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // int_0^1 ln(x) dx = -1
        let tol = Tolerance::relative(1e-10);
        let e = integrate(&|x: f64| x.ln(), 0.0, 1.0, &tol).unwrap();
        assert!((e.value + 1.0).abs() < 1e-10, "{e:?}");
    }

    #[test]
    fn adaptive_handles_sqrt_edge() {
        // int_0^1 sqrt(1 - x^2) dx = pi / 4
        let tol = Tolerance::relative(1e-12);
        let e = integrate(&|x: f64| (1.0 - x * x).max(0.0).sqrt(), 0.0, 1.0, &tol).unwrap();
        assert!((e.value - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_with_panels() {
        // int_0^{20 pi} x sin(x) dx = -20 pi
        let k = 20.0 * std::f64::consts::PI;
        let breaks = breaks_with_max_width(0.0, k, std::f64::consts::FRAC_PI_2);
        let tol = Tolerance::relative(1e-12);
        let e = integrate_with_breaks(&|x: f64| x * x.sin(), &breaks, &tol).unwrap();
        assert!((e.value + k).abs() < 1e-9 * k);
    }

    #[test]
    fn panels_sum_matches_global() {
        let f = |x: f64| (-x * x).exp();
        let breaks = uniform_breaks(0.0, 6.0, 12);
        let tol = Tolerance::relative(1e-13);
        let a = integrate_panels(&f, &breaks, &tol).unwrap();
        let expected = std::f64::consts::PI.sqrt() / 2.0;
        assert!((a.value - expected).abs() < 1e-13);
    }

    #[test]
    fn non_finite_is_reported() {
        let tol = Tolerance::relative(1e-8);
        let r = integrate(&|x: f64| 1.0 / (x - 0.5), 0.0, 1.0, &tol);
        assert!(r.is_err());
    }

    #[test]
    fn nonconvergence_reports_estimate() {
        let tol = Tolerance::relative(1e-14).with_max_subdivisions(3);
        let r = integrate(&|x: f64| (50.0 * x).sin().abs(), 0.0, 10.0, &tol);
        match r {
            Err(QuadratureError::NotConverged { error, .. }) => assert!(error > 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn works_in_single_precision() {
        let tol = Tolerance::<f32>::relative(1e-6);
        let e = integrate(&|x: f32| x.exp(), 0.0f32, 1.0, &tol).unwrap();
        assert!((e.value - (std::f32::consts::E - 1.0)).abs() < 1e-5);
    }
}
