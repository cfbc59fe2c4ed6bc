//! Monte Carlo collision simulator.
//!
//! Each trajectory is a sequence of sampled collisions separated by
//! exponential waiting times at the total flux rate. A collision with a
//! particle in internal state j, momentum p and impact parameter b applies
//! W = exp(−iφF) to ρ ⊗ |j><j| and traces the particle out, with
//! φ = J(p, b) for straight trajectories. Between collisions the system
//! evolves under H_S alone. Averaging trajectories gives an estimate of the
//! collision-model master equation that shares no code with it.

use std::io::{self, Write};

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cm::refracted_tau;
use crate::error::{Error, Result};
use crate::model::{particle_block, DensityMatrix, GasParameters, SpinModel};
use crate::output::{fmt17, matrix_columns, matrix_fields};
use crate::potentials::{PotentialKind, RadialPotential, TabulatedPotential};
use crate::scalar::{cis, cplx, CMatrix, Real};

/// Grid size of the momentum inverse-CDF table and the tabulated path
/// integral cache.
pub const SAMPLER_GRID: usize = 4096;
/// Upper limit on the number of batches used for standard errors.
pub const MAX_BATCHES: usize = 100;

/// Collision duration model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum TauMode {
    Straight,
    /// Square-well refraction by a fixed mean field ⟨F⟩.
    Refracted { f_expect: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub trajectories: usize,
    pub t_end: T,
    pub seed: u64,
    pub sample_times: Vec<T>,
    pub tau_mode: TauMode,
}

impl<T: Real> SimConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 {
            return Err(Error::InvalidParameter("need at least one trajectory".into()));
        }
        if !(self.t_end >= T::zero()) || !self.t_end.is_finite() {
            return Err(Error::InvalidParameter(format!("t_end must be finite and >= 0, got {}", self.t_end)));
        }
        if self.sample_times.iter().any(|&t| !(t >= T::zero() && t <= self.t_end)) {
            return Err(Error::InvalidParameter("sample times must lie in [0, t_end]".into()));
        }
        if self.sample_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("sample times must be ascending".into()));
        }
        Ok(())
    }
}

/// Total collision rate ν π b_max² <p>.
pub fn total_collision_rate<T: Real>(pot: &RadialPotential<T>, gas: &GasParameters<T>) -> T {
    let b = pot.cutoff_radius();
    gas.nu * T::pi() * b * b * gas.mean_momentum()
}

/// Effective collision time tau with u·tau = J(p, b) (straight) or the
/// refracted square-well value.
pub fn effective_tau_sample<T: Real>(pot: &RadialPotential<T>, p: T, b: T, mode: TauMode) -> Result<T> {
    match mode {
        TauMode::Straight => {
            let u = pot.strength();
            if u == T::zero() {
                return Err(Error::InvalidParameter("tau is undefined for a zero potential".into()));
            }
            Ok(pot.line_integral(p, b)? / u)
        }
        TauMode::Refracted { f_expect } => {
            if pot.kind() != PotentialKind::SquareWell {
                return Err(Error::Unsupported(format!(
                    "refracted trajectories are only modelled for the square well, not {}",
                    pot.kind()
                )));
            }
            let a = -T::lit(f_expect) * pot.strength();
            if a < T::zero() {
                return Err(Error::InvalidParameter("refraction needs <F> u <= 0".into()));
            }
            Ok(refracted_tau(p, b, a))
        }
    }
}

/// Samples |p| from the flux-weighted density ∝ p³ f(p).
///
/// With s = p²/2θ the CDF is 1 − (1 + s) e^{−s}. A log-spaced table of the
/// CDF brackets each draw, and a safeguarded Newton iteration on the exact
/// CDF finishes the inversion.
#[derive(Debug, Clone)]
pub struct MomentumSampler {
    theta: f64,
    s: Vec<f64>,
    cdf: Vec<f64>,
    /// dF/ds = s e^{−s} at the grid points.
    dens: Vec<f64>,
    /// guide[k] is the last grid index with cdf <= k / n, narrowing the
    /// bracket search to a few entries.
    guide: Vec<usize>,
}

const S_MIN: f64 = 1e-10;
const S_MAX: f64 = 80.0;

fn flux_cdf(s: f64) -> f64 {
    if s < 0.1 {
        // Σ_{n>=2} (−1)^n (n − 1) s^n / n!
        let mut term = s * s / 2.0;
        let mut sum = term;
        let mut n = 2.0;
        loop {
            term *= -s / (n + 1.0);
            let add = term * n;
            sum += add;
            n += 1.0;
            if add.abs() < 1e-18 * sum || n > 30.0 {
                break;
            }
        }
        sum
    } else {
        1.0 - (1.0 + s) * (-s).exp()
    }
}

impl MomentumSampler {
    pub fn new(theta: f64) -> Self {
        let n = SAMPLER_GRID;
        let (lo, hi) = (S_MIN.ln(), S_MAX.ln());
        let s: Vec<f64> = (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect();
        let cdf: Vec<f64> = s.iter().map(|&x| flux_cdf(x)).collect();
        let guide = (0..=n)
            .map(|k| cdf.partition_point(|&c| c <= k as f64 / n as f64).saturating_sub(1))
            .collect();
        let dens = s.iter().map(|&x| x * (-x).exp()).collect();
        Self { theta, s, cdf, dens, guide }
    }

    /// Flux CDF at momentum `p`.
    pub fn cdf(&self, p: f64) -> f64 {
        flux_cdf(p * p / (2.0 * self.theta))
    }

    /// Inverse CDF at `u` in [0, 1).
    pub fn sample(&self, u: f64) -> f64 {
        let s = if u <= self.cdf[0] {
            // F ≈ s²/2 below the table.
            (2.0 * u).sqrt()
        } else if u >= self.cdf[self.cdf.len() - 1] {
            S_MAX
        } else {
            let g = ((u * SAMPLER_GRID as f64) as usize).min(SAMPLER_GRID - 1);
            let (lo, hi) = (self.guide[g], (self.guide[g + 1] + 1).min(self.cdf.len() - 1));
            let i = lo + self.cdf[lo..=hi].partition_point(|&c| c <= u) - 1;
            let (mut a, mut b) = (self.s[i], self.s[i + 1]);
            // Cubic Hermite in F for s(F), using ds/dF = 1/density.
            let h = self.cdf[i + 1] - self.cdf[i];
            let t = (u - self.cdf[i]) / h;
            let (t2, t3) = (t * t, t * t * t);
            let mut x = (2.0 * t3 - 3.0 * t2 + 1.0) * a
                + (t3 - 2.0 * t2 + t) * h / self.dens[i]
                + (-2.0 * t3 + 3.0 * t2) * b
                + (t3 - t2) * h / self.dens[i + 1];
            if !(x > a && x < b) {
                x = a + (b - a) * t;
            }
            for _ in 0..40 {
                let e = (-x).exp();
                let f = if x < 0.1 { flux_cdf(x) } else { 1.0 - (1.0 + x) * e } - u;
                if f == 0.0 {
                    break;
                }
                if f > 0.0 {
                    b = x;
                } else {
                    a = x;
                }
                let mut next = x - f / (x * e);
                if !(next > a && next < b) {
                    next = 0.5 * (a + b);
                }
                let step = (next - x).abs();
                x = next;
                // Quadratic convergence: the error left after a step this
                // small is below rounding.
                if step <= 1e-9 * x {
                    break;
                }
            }
            x
        };
        (2.0 * self.theta * s).sqrt()
    }
}

/// Spectral blocks of F split by particle indices, expressed in the H_S
/// eigenbasis: for each incoming state j and outgoing state i the pairs
/// (λ_k, <i|P_k|j>).
struct KrausTable<T: Real> {
    dim_s: usize,
    blocks: Vec<Vec<Vec<(T, Vec<Complex<T>>)>>>,
}

impl<T: Real> KrausTable<T> {
    fn new(model: &SpinModel<T>, basis: &CMatrix<T>) -> Self {
        let (ds, dg) = (model.dim_s(), model.dim_g());
        let eig = model.f().clone().symmetric_eigen();
        let n = ds * dg;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap_or(std::cmp::Ordering::Equal));
        let scale = model.interaction_norm().max(T::one());
        let mut groups: Vec<(T, Vec<usize>)> = Vec::new();
        for &k in &order {
            let lam = eig.eigenvalues[k];
            match groups.last_mut() {
                Some((l, members)) if (lam - *l).abs() <= T::tol(1e-10) * scale => members.push(k),
                _ => groups.push((lam, vec![k])),
            }
        }
        let lift = basis.kronecker(&CMatrix::identity(dg, dg));
        let mut blocks = vec![vec![Vec::new(); dg]; dg];
        for (_, members) in &groups {
            let lam = members.iter().fold(T::zero(), |a, &k| a + eig.eigenvalues[k]) / T::lit(members.len() as f64);
            let mut proj = CMatrix::zeros(n, n);
            for &k in members {
                let v = eig.eigenvectors.column(k);
                proj += &v * v.adjoint();
            }
            let proj = lift.adjoint() * proj * &lift;
            for (j, row) in blocks.iter_mut().enumerate() {
                for (i, cell) in row.iter_mut().enumerate() {
                    let b = particle_block(&proj, ds, dg, i, j);
                    if b.iter().any(|z| z.norm_sqr() > T::lit(1e-28)) {
                        // Row-major copy for the hand-written kernels below.
                        let flat = (0..ds * ds).map(|x| b[(x / ds, x % ds)]).collect();
                        cell.push((lam, flat));
                    }
                }
            }
        }
        Self { dim_s: ds, blocks }
    }

    /// ρ ← Σ_i K_i ρ K_i† with K_i = Σ_k e^{−iφλ_k} <i|P_k|j>.
    fn apply(&self, rho: &mut [Complex<T>], j: usize, phi: T, scratch: &mut Scratch<T>) {
        let d = self.dim_s;
        let out = &mut scratch.out;
        out.iter_mut().for_each(|z| *z = cplx(T::zero(), T::zero()));
        for cell in &self.blocks[j] {
            if cell.is_empty() {
                continue;
            }
            let k = &mut scratch.kraus;
            k.iter_mut().for_each(|z| *z = cplx(T::zero(), T::zero()));
            for (lam, b) in cell {
                let ph = cis(-phi * *lam);
                for (kz, bz) in k.iter_mut().zip(b) {
                    *kz += ph * *bz;
                }
            }
            // tmp = K ρ ; out += tmp K†
            let tmp = &mut scratch.tmp;
            for r in 0..d {
                for c in 0..d {
                    let mut acc = cplx(T::zero(), T::zero());
                    for m in 0..d {
                        acc += k[r * d + m] * rho[m * d + c];
                    }
                    tmp[r * d + c] = acc;
                }
            }
            for r in 0..d {
                for c in 0..d {
                    let mut acc = cplx(T::zero(), T::zero());
                    for m in 0..d {
                        acc += tmp[r * d + m] * k[c * d + m].conj();
                    }
                    out[r * d + c] += acc;
                }
            }
        }
        // Symmetrize away rounding asymmetry.
        let half = T::lit(0.5);
        for r in 0..d {
            for c in r..d {
                let a = out[r * d + c];
                let b = out[c * d + r].conj();
                let m = (a + b) * half;
                rho[r * d + c] = m;
                rho[c * d + r] = m.conj();
            }
        }
    }
}

struct Scratch<T> {
    out: Vec<Complex<T>>,
    kraus: Vec<Complex<T>>,
    tmp: Vec<Complex<T>>,
}

impl<T: Real> Scratch<T> {
    fn new(d: usize) -> Self {
        let z = vec![cplx(T::zero(), T::zero()); d * d];
        Self {
            out: z.clone(),
            kraus: z.clone(),
            tmp: z,
        }
    }
}

enum PhaseModel<T: Real> {
    Straight(RadialPotential<T>),
    /// Straight trajectories through a tabulated potential: p·J(b) cached on
    /// a uniform b grid.
    StraightCached(TabulatedPotential<T>),
    Refracted { u: T, a: T },
}

impl<T: Real> PhaseModel<T> {
    fn new(pot: &RadialPotential<T>, mode: TauMode) -> Result<Self> {
        match mode {
            TauMode::Refracted { f_expect } => {
                if pot.kind() != PotentialKind::SquareWell {
                    return Err(Error::Unsupported(format!(
                        "refracted trajectories are only modelled for the square well, not {}",
                        pot.kind()
                    )));
                }
                let u = pot.strength();
                let a = -T::lit(f_expect) * u;
                if a < T::zero() {
                    return Err(Error::InvalidParameter("refraction needs <F> u <= 0".into()));
                }
                Ok(PhaseModel::Refracted { u, a })
            }
            TauMode::Straight => match pot {
                RadialPotential::Tabulated(_) => {
                    let b_max = pot.cutoff_radius();
                    let h = b_max / T::lit((SAMPLER_GRID - 1) as f64);
                    let mut bs = Vec::with_capacity(SAMPLER_GRID);
                    let mut js = Vec::with_capacity(SAMPLER_GRID);
                    for i in 0..SAMPLER_GRID {
                        let b = h * T::lit(i as f64);
                        bs.push(b);
                        js.push(pot.path_integral(b)?);
                    }
                    Ok(PhaseModel::StraightCached(TabulatedPotential::new(bs, js)?))
                }
                _ => Ok(PhaseModel::Straight(pot.clone())),
            },
        }
    }

    fn phase(&self, p: T, b: T) -> T {
        match self {
            PhaseModel::Straight(pot) => pot.path_integral(b).unwrap_or(T::zero()) / p,
            PhaseModel::StraightCached(t) => t.value(b) / p,
            PhaseModel::Refracted { u, a } => *u * refracted_tau(p, b, *a),
        }
    }
}

/// Ensemble averages at each sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult<T: Real> {
    pub sample_times: Vec<T>,
    pub mean: Vec<CMatrix<T>>,
    /// Standard error of each entry's real and imaginary parts, from batch
    /// means, stored as (se_re, se_im).
    pub standard_error: Vec<CMatrix<T>>,
    /// Mean number of collisions up to each sample time.
    pub mean_collisions: Vec<f64>,
    pub collisions: CollisionStats,
    pub trajectories: usize,
    pub batches: usize,
    pub seed: u64,
    pub t_end: T,
    pub rate: T,
    /// |pJ(0)|/<p>: the phase of a head-on collision at mean momentum.
    pub stroboscopic_phase: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionStats {
    /// Mean collisions per trajectory over [0, t_end].
    pub mean: f64,
    /// Sample standard deviation across trajectories.
    pub std_dev: f64,
    /// R t_end.
    pub expected: f64,
}

impl<T: Real> EnsembleResult<T> {
    /// ½‖ρ̄ − σ‖₁ at sample `i`.
    pub fn trace_distance_to(&self, i: usize, sigma: &CMatrix<T>) -> T {
        crate::model::trace_distance(&self.mean[i], sigma)
    }

    /// Standard-error scale of the trace distance at sample `i`:
    /// (√d / 2) ‖SE‖_F.
    pub fn trace_distance_se(&self, i: usize) -> T {
        let se = &self.standard_error[i];
        let d = T::lit(se.nrows() as f64);
        let fro = se.iter().fold(T::zero(), |a, z| a + z.re * z.re + z.im * z.im).sqrt();
        d.sqrt() / T::lit(2.0) * fro
    }

    /// CSV: t, mean collisions, row-major mean entries, then their
    /// standard errors.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.mean.first().map_or(0, |m| m.nrows());
        let mut header = vec!["t".to_string(), "mean_collisions".to_string()];
        header.extend(matrix_columns("rho", d));
        header.extend(matrix_columns("se", d));
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.sample_times.len() {
            let mut row = vec![fmt17(self.sample_times[i].as_f64()), fmt17(self.mean_collisions[i])];
            row.extend(matrix_fields(&self.mean[i]));
            row.extend(matrix_fields(&self.standard_error[i]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn summary(&self) -> EnsembleSummary {
        EnsembleSummary {
            trajectories: self.trajectories,
            batches: self.batches,
            seed: self.seed,
            t_end: self.t_end.as_f64(),
            rate: self.rate.as_f64(),
            stroboscopic_phase: self.stroboscopic_phase.as_f64(),
            collisions: self.collisions,
            sample_times: self.sample_times.iter().map(|t| t.as_f64()).collect(),
            trace_distance_se: (0..self.sample_times.len()).map(|i| self.trace_distance_se(i).as_f64()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSummary {
    pub trajectories: usize,
    pub batches: usize,
    pub seed: u64,
    pub t_end: f64,
    pub rate: f64,
    pub stroboscopic_phase: f64,
    pub collisions: CollisionStats,
    pub sample_times: Vec<f64>,
    pub trace_distance_se: Vec<f64>,
}

/// Per-batch sums, combined by a fixed pairwise tree.
#[derive(Clone)]
struct BatchSums<T: Real> {
    count: usize,
    rho: Vec<Vec<Complex<T>>>,
    collisions_at: Vec<f64>,
    collisions: f64,
    collisions_sq: f64,
}

impl<T: Real> BatchSums<T> {
    fn zero(samples: usize, d: usize) -> Self {
        Self {
            count: 0,
            rho: vec![vec![cplx(T::zero(), T::zero()); d * d]; samples],
            collisions_at: vec![0.0; samples],
            collisions: 0.0,
            collisions_sq: 0.0,
        }
    }

    fn add(mut self, other: &Self) -> Self {
        self.count += other.count;
        for (a, b) in self.rho.iter_mut().zip(&other.rho) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        for (a, b) in self.collisions_at.iter_mut().zip(&other.collisions_at) {
            *a += *b;
        }
        self.collisions += other.collisions;
        self.collisions_sq += other.collisions_sq;
        self
    }
}

fn pairwise_sum<T: Real>(items: &[BatchSums<T>], samples: usize, d: usize) -> BatchSums<T> {
    match items.len() {
        0 => BatchSums::zero(samples, d),
        1 => items[0].clone(),
        n => {
            let (l, r) = items.split_at(n / 2);
            pairwise_sum(l, samples, d).add(&pairwise_sum(r, samples, d))
        }
    }
}

/// Prepared simulator: sampler tables, spectral blocks and the H_S
/// eigenbasis are built once and shared read-only by all trajectories.
pub struct CollisionSimulator<T: Real> {
    dim: usize,
    energies: Vec<T>,
    basis: CMatrix<T>,
    kraus: KrausTable<T>,
    phase: PhaseModel<T>,
    sampler: MomentumSampler,
    mu_cdf: Vec<f64>,
    rate: T,
    b_max: T,
    inert: bool,
    stroboscopic_phase: T,
}

impl<T: Real> CollisionSimulator<T> {
    pub fn new(model: &SpinModel<T>, pot: &RadialPotential<T>, gas: &GasParameters<T>, mode: TauMode) -> Result<Self> {
        let eig = model.h_s().clone().symmetric_eigen();
        let energies: Vec<T> = eig.eigenvalues.iter().copied().collect();
        let basis = eig.eigenvectors;
        let kraus = KrausTable::new(model, &basis);
        let phase = PhaseModel::new(pot, mode)?;
        let mut acc = 0.0;
        let mut mu_cdf: Vec<f64> = model
            .mu()
            .iter()
            .map(|m| {
                acc += m.as_f64();
                acc
            })
            .collect();
        if let Some(last) = mu_cdf.last_mut() {
            *last = f64::INFINITY;
        }
        let inert = pot.strength() == T::zero();
        let stroboscopic_phase = pot.path_integral(T::zero())?.abs() / gas.mean_momentum();
        Ok(Self {
            dim: model.dim_s(),
            energies,
            basis,
            kraus,
            phase,
            sampler: MomentumSampler::new(gas.theta.as_f64()),
            mu_cdf,
            rate: total_collision_rate(pot, gas),
            b_max: pot.cutoff_radius(),
            inert,
            stroboscopic_phase,
        })
    }

    pub fn rate(&self) -> T {
        self.rate
    }

    fn free_evolve(&self, rho: &mut [Complex<T>], dt: T, phases: &mut [Complex<T>]) {
        if dt <= T::zero() || self.energies.iter().all(|&e| e == T::zero()) {
            return;
        }
        let d = self.dim;
        for (ph, &e) in phases.iter_mut().zip(&self.energies) {
            *ph = cis(-e * dt);
        }
        for r in 0..d {
            for c in 0..d {
                rho[r * d + c] *= phases[r] * phases[c].conj();
            }
        }
    }

    fn to_eigenbasis(&self, rho: &CMatrix<T>) -> Vec<Complex<T>> {
        let m = self.basis.adjoint() * rho * &self.basis;
        let d = self.dim;
        (0..d * d).map(|x| m[(x / d, x % d)]).collect()
    }

    fn from_eigenbasis(&self, flat: &[Complex<T>]) -> CMatrix<T> {
        let d = self.dim;
        let m = CMatrix::from_fn(d, d, |r, c| flat[r * d + c]);
        &self.basis * m * self.basis.adjoint()
    }

    /// One trajectory; calls `record(sample_index, ρ in the eigenbasis,
    /// collisions so far)` at each sample time and returns the total number
    /// of collisions.
    fn trajectory<F: FnMut(usize, &[Complex<T>], usize)>(
        &self,
        rho0: &[Complex<T>],
        cfg: &SimConfig<T>,
        index: u64,
        scratch: &mut Scratch<T>,
        mut record: F,
    ) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index);
        let mut rho = rho0.to_vec();
        let mut phases = vec![cplx(T::zero(), T::zero()); self.dim];
        let mut t = T::zero();
        let mut next_sample = 0;
        let mut collisions = 0usize;
        let rate = self.rate.as_f64();
        loop {
            let wait = if rate > 0.0 {
                -(1.0 - rng.gen::<f64>()).ln() / rate
            } else {
                f64::INFINITY
            };
            let t_next = t.as_f64() + wait;
            while next_sample < cfg.sample_times.len() && cfg.sample_times[next_sample].as_f64() <= t_next {
                let ts = cfg.sample_times[next_sample];
                self.free_evolve(&mut rho, ts - t, &mut phases);
                t = ts;
                record(next_sample, &rho, collisions);
                next_sample += 1;
            }
            if t_next > cfg.t_end.as_f64() {
                break;
            }
            let t_coll = T::lit(t_next);
            self.free_evolve(&mut rho, t_coll - t, &mut phases);
            t = t_coll;
            let p = self.sampler.sample(rng.gen::<f64>());
            let b = self.b_max * T::lit(rng.gen::<f64>().sqrt());
            let uj = rng.gen::<f64>();
            let j = self.mu_cdf.partition_point(|&c| c <= uj);
            collisions += 1;
            if !self.inert {
                let phi = self.phase.phase(T::lit(p), b);
                self.kraus.apply(&mut rho, j, phi, scratch);
            }
        }
        collisions
    }

    /// Averages `cfg.trajectories` trajectories started from `rho0`.
    ///
    /// Trajectories are split into at most [`MAX_BATCHES`] contiguous batches
    /// that depend only on the trajectory count; batches run in parallel and
    /// are combined by a fixed pairwise tree, so results are bitwise
    /// identical for any thread count.
    pub fn run(&self, rho0: &DensityMatrix<T>, cfg: &SimConfig<T>) -> Result<EnsembleResult<T>> {
        cfg.validate()?;
        if rho0.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "state is {}-dimensional, system {}",
                rho0.dim(),
                self.dim
            )));
        }
        let d = self.dim;
        let ns = cfg.sample_times.len();
        let n = cfg.trajectories;
        let nb = n.min(MAX_BATCHES);
        let start = self.to_eigenbasis(rho0.matrix());
        let bounds = |b: usize| b * n / nb;

        let batches: Vec<BatchSums<T>> = (0..nb)
            .into_par_iter()
            .map(|bi| {
                let mut sums = BatchSums::zero(ns, d);
                let mut scratch = Scratch::new(d);
                for idx in bounds(bi)..bounds(bi + 1) {
                    let total = self.trajectory(&start, cfg, idx as u64, &mut scratch, |s, rho, count| {
                        for (acc, z) in sums.rho[s].iter_mut().zip(rho) {
                            *acc += *z;
                        }
                        sums.collisions_at[s] += count as f64;
                    });
                    sums.count += 1;
                    sums.collisions += total as f64;
                    sums.collisions_sq += (total as f64) * (total as f64);
                }
                sums
            })
            .collect();

        let total = pairwise_sum(&batches, ns, d);
        let nf = T::lit(n as f64);
        let mut mean = Vec::with_capacity(ns);
        let mut se = Vec::with_capacity(ns);
        for s in 0..ns {
            let m: Vec<Complex<T>> = total.rho[s].iter().map(|z| *z / nf).collect();
            let mut var = vec![cplx(T::zero(), T::zero()); d * d];
            if nb > 1 {
                // Batch-mean variance with batch weights n_b / N.
                for b in &batches {
                    let w = T::lit(b.count as f64) / nf;
                    let bc = T::lit(b.count as f64);
                    for ((v, bz), mz) in var.iter_mut().zip(&b.rho[s]).zip(&m) {
                        let diff = *bz / bc - *mz;
                        v.re += w * w * diff.re * diff.re;
                        v.im += w * w * diff.im * diff.im;
                    }
                }
                let corr = T::lit(nb as f64 / (nb as f64 - 1.0));
                for v in var.iter_mut() {
                    v.re = (v.re * corr).sqrt();
                    v.im = (v.im * corr).sqrt();
                }
            }
            mean.push(self.from_eigenbasis(&m));
            // Entry errors transform with the basis only when it is trivial;
            // otherwise report the eigenbasis spread bounded through the
            // Frobenius norm, which is basis independent.
            se.push(self.rotate_errors(&var));
        }
        let nfl = n as f64;
        let c_mean = total.collisions / nfl;
        let c_var = if n > 1 {
            ((total.collisions_sq - nfl * c_mean * c_mean) / (nfl - 1.0)).max(0.0)
        } else {
            0.0
        };
        Ok(EnsembleResult {
            sample_times: cfg.sample_times.clone(),
            mean,
            standard_error: se,
            mean_collisions: total.collisions_at.iter().map(|c| c / nfl).collect(),
            collisions: CollisionStats {
                mean: c_mean,
                std_dev: c_var.sqrt(),
                expected: self.rate.as_f64() * cfg.t_end.as_f64(),
            },
            trajectories: n,
            batches: nb,
            seed: cfg.seed,
            t_end: cfg.t_end,
            rate: self.rate,
            stroboscopic_phase: self.stroboscopic_phase,
        })
    }

    fn rotate_errors(&self, var: &[Complex<T>]) -> CMatrix<T> {
        let d = self.dim;
        let identity_basis = (0..d).all(|r| {
            (0..d).all(|c| {
                let z = self.basis[(r, c)];
                let want = if r == c { T::one() } else { T::zero() };
                (z.re.abs() - want).abs() <= T::tol(1e-14) && z.im.abs() <= T::tol(1e-14)
            })
        });
        let m = CMatrix::from_fn(d, d, |r, c| var[r * d + c]);
        if identity_basis {
            // Eigenvector signs may flip; magnitudes are unaffected.
            let mut out = CMatrix::zeros(d, d);
            for r in 0..d {
                for c in 0..d {
                    let pr = (0..d).find(|&k| self.basis[(r, k)].norm_sqr() > T::lit(0.25)).unwrap_or(r);
                    let pc = (0..d).find(|&k| self.basis[(c, k)].norm_sqr() > T::lit(0.25)).unwrap_or(c);
                    out[(r, c)] = m[(pr, pc)];
                }
            }
            return out;
        }
        // Spread the total variance evenly; the Frobenius norm, and with it
        // the trace-distance error scale, is preserved by the rotation.
        let total = m.iter().fold(T::zero(), |a, z| a + z.re * z.re + z.im * z.im);
        let each = (total / T::lit((2 * d * d) as f64)).sqrt();
        CMatrix::from_element(d, d, cplx(each, each))
    }
}

/// Builds a simulator and runs it.
pub fn run_ensemble<T: Real>(
    model: &SpinModel<T>,
    pot: &RadialPotential<T>,
    gas: &GasParameters<T>,
    cfg: &SimConfig<T>,
    rho0: &DensityMatrix<T>,
) -> Result<EnsembleResult<T>> {
    CollisionSimulator::new(model, pot, gas, cfg.tau_mode)?.run(rho0, cfg)
}
