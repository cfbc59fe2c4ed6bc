use std::path::Path;

use gasmaster::cm::{cm_coefficients, CmCoefficients};
use gasmaster::colsim::{run_ensemble, EnsembleSummary, SimConfig, TauMode};
use gasmaster::compare::{discrepancy_estimates, temperature_sweep, write_sweep_csv, ComparisonRecord};
use gasmaster::ldl::{gamma_quadrature, lamb_shift_ldl, ldl_coefficients, LdlCoefficients};
use gasmaster::liouville::{build_generator, evolve_grid};
use gasmaster::model::{RegimeDiagnostics, UnitSystem};
use gasmaster::output::write_trajectory_csv;
use gasmaster::{CMatrix, GasParameters, LambOrder, Method};
use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::config::{parse_state, GeneratorKind, KindSpec, Override, Resolved};
use crate::CliError;

/// Echo of the inputs that determine a run. Thread counts and paths are
/// left out so that outputs depend only on the physics and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub command: String,
    pub version: String,
    pub potential: KindSpec,
    pub u: f64,
    pub nu: f64,
    pub theta: Option<f64>,
    pub units: Option<UnitSystem>,
    pub overrides: Vec<Override>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    pub ratios: RegimeDiagnostics<f64>,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesReport {
    pub metadata: Metadata,
    pub ldl: LdlCoefficients<f64>,
    pub cm: CmCoefficients<f64>,
    pub hh_estimate: f64,
    pub dd_estimate: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveReport {
    pub metadata: Metadata,
    pub generator: GeneratorKind,
    pub method: Method,
    /// Γ for LDL, c2 for CM.
    pub rate: f64,
    pub lamb_shift: Vec<[f64; 2]>,
    pub trace_renormalized: bool,
    pub steps: usize,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateReport {
    pub metadata: Metadata,
    pub tau_mode: TauMode,
    pub ensemble: EnsembleSummary,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareReport {
    pub metadata: Metadata,
    pub records: Vec<ComparisonRecord<f64>>,
    pub failed_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambShiftReport {
    pub metadata: Metadata,
    pub order: u8,
    pub ldl: Vec<[f64; 2]>,
    /// ⟨U0 tau / t_free⟩ Σ μ_i A_ii.
    pub cm: Vec<[f64; 2]>,
    pub hh_estimate: f64,
    pub regime: Regime,
}

/// A file produced by a command.
pub struct Artifact {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

pub struct Outcome {
    /// The first artifact is the primary one.
    pub artifacts: Vec<Artifact>,
    /// Set when the command finished but part of it failed numerically.
    pub partial_failure: Option<String>,
}

fn flat(m: &CMatrix) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z: Complex<f64> = m[(i, j)];
            out.push([z.re, z.im]);
        }
    }
    out
}

fn json<T: Serialize>(name: &'static str, value: &T) -> Result<Artifact, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    Ok(Artifact { name, bytes })
}

fn metadata(command: &str, r: &Resolved) -> Metadata {
    Metadata {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        potential: r.raw.potential.kind,
        u: r.potential.strength(),
        nu: r.nu,
        theta: r.theta,
        units: r.units,
        overrides: r.overrides.clone(),
    }
}

/// Regime ratios at one temperature; with `strict`, any ratio >= 1 is an
/// error.
fn regime(gas: &GasParameters, u: f64, strict: bool) -> Result<Regime, CliError> {
    let ratios = gas.regime(u);
    let violations: Vec<String> = ratios.violations().into_iter().map(String::from).collect();
    if !violations.is_empty() {
        let msg = format!("validity regime violated at theta = {}: {}", gas.theta, violations.join(", "));
        if strict {
            return Err(CliError::Regime(msg));
        }
        log::warn!("{msg}");
    }
    Ok(Regime { ratios, violations })
}

pub fn rates(r: &Resolved, strict: bool) -> Result<Outcome, CliError> {
    let gas = r.gas()?;
    let u = r.potential.strength();
    let regime = regime(&gas, u, strict)?;
    let ldl = ldl_coefficients(&r.potential, &gas)?;
    let cm = cm_coefficients(&r.potential, &gas)?;
    let (hh, dd) = discrepancy_estimates(&r.model, &gas, u);
    let report = RatesReport {
        metadata: metadata("rates", r),
        ldl,
        cm,
        hh_estimate: hh,
        dd_estimate: dd,
        regime,
    };
    Ok(Outcome {
        artifacts: vec![json("rates.json", &report)?],
        partial_failure: None,
    })
}

/// Lamb shift and rate of the chosen generator.
fn generator_parts(r: &Resolved, gas: &GasParameters, kind: GeneratorKind, order: LambOrder) -> Result<(CMatrix, f64), CliError> {
    Ok(match kind {
        GeneratorKind::Ldl => (lamb_shift_ldl(&r.model, &r.potential, gas, order)?, gamma_quadrature(&r.potential, gas)?),
        GeneratorKind::Cm => {
            if order != LambOrder::First {
                return Err(CliError::Config("the collision model has a first-order Lamb shift only".into()));
            }
            let cm = cm_coefficients(&r.potential, gas)?;
            (r.model.mean_diagonal_jump() * Complex::new(cm.c1, 0.0), cm.c2)
        }
    })
}

pub fn evolve(r: &Resolved, strict: bool) -> Result<Outcome, CliError> {
    let spec = r.raw.evolve.as_ref().ok_or_else(|| CliError::Config("missing evolve block".into()))?;
    let gas = r.gas()?;
    let regime = regime(&gas, r.potential.strength(), strict)?;
    let rho0 = parse_state("evolve.rho0", &spec.rho0, r.model.dim_s())?;
    let order = Resolved::lamb_order(spec.lamb_order)?;
    let (lamb, rate) = generator_parts(r, &gas, spec.generator, order)?;
    let gen = build_generator(&r.model, &lamb, rate).map_err(|e| CliError::Config(e.to_string()))?;
    let traj = evolve_grid(&gen, &rho0, &spec.t_grid, spec.method)?;
    let mut csv = Vec::new();
    write_trajectory_csv(&mut csv, &traj.times, &traj.states)?;
    let report = EvolveReport {
        metadata: metadata("evolve", r),
        generator: spec.generator,
        method: spec.method,
        rate,
        lamb_shift: flat(&lamb),
        trace_renormalized: traj.trace_renormalized,
        steps: traj.steps,
        regime,
    };
    Ok(Outcome {
        artifacts: vec![
            Artifact {
                name: "trajectory.csv",
                bytes: csv,
            },
            json("evolve.json", &report)?,
        ],
        partial_failure: None,
    })
}

pub fn simulate(r: &Resolved, strict: bool) -> Result<Outcome, CliError> {
    let spec = r.raw.simulate.as_ref().ok_or_else(|| CliError::Config("missing simulate block".into()))?;
    let gas = r.gas()?;
    let regime = regime(&gas, r.potential.strength(), strict)?;
    let rho_entries = spec
        .rho0
        .as_ref()
        .or(r.raw.evolve.as_ref().map(|e| &e.rho0))
        .ok_or_else(|| CliError::Config("simulate.rho0 is required".into()))?;
    let rho0 = parse_state("simulate.rho0", rho_entries, r.model.dim_s())?;
    let t_end = spec.t_end.or(spec.sample_times.last().copied()).unwrap_or(0.0);
    let cfg = SimConfig {
        trajectories: spec.trajectories,
        t_end,
        seed: spec.seed,
        sample_times: spec.sample_times.clone(),
        tau_mode: spec.tau_mode,
    };
    cfg.validate().map_err(|e| CliError::Config(format!("simulate: {e}")))?;
    let res = run_ensemble(&r.model, &r.potential, &gas, &cfg, &rho0)?;
    let mut csv = Vec::new();
    res.write_csv(&mut csv)?;
    let report = SimulateReport {
        metadata: metadata("simulate", r),
        tau_mode: spec.tau_mode,
        ensemble: res.summary(),
        regime,
    };
    Ok(Outcome {
        artifacts: vec![
            Artifact {
                name: "ensemble.csv",
                bytes: csv,
            },
            json("ensemble.json", &report)?,
        ],
        partial_failure: None,
    })
}

pub fn compare(r: &Resolved, strict: bool) -> Result<Outcome, CliError> {
    let spec = r.raw.sweep.as_ref().ok_or_else(|| CliError::Config("missing sweep block".into()))?;
    let u = r.potential.strength();
    for &theta in &spec.theta_grid {
        regime(&GasParameters::new(r.nu, theta)?, u, strict)?;
    }
    let rows = temperature_sweep(&r.potential, &r.model, r.nu, u, &spec.theta_grid).map_err(|e| CliError::Config(format!("sweep: {e}")))?;
    let failed = rows.iter().filter(|x| !x.is_ok()).count();
    let meta = metadata("compare", r);
    let mut params = vec![
        ("potential", serde_json::to_value(meta.potential).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()),
        ("u", format!("{u:e}")),
        ("nu", format!("{:e}", r.nu)),
    ];
    for o in &meta.overrides {
        params.push(("override", format!("{}={}", o.field, o.flag)));
    }
    let mut csv = Vec::new();
    write_sweep_csv(&mut csv, &params, &rows)?;
    let report = CompareReport {
        metadata: meta,
        records: rows,
        failed_rows: failed,
    };
    Ok(Outcome {
        artifacts: vec![
            Artifact {
                name: "sweep.csv",
                bytes: csv,
            },
            json("sweep.json", &report)?,
        ],
        partial_failure: (failed > 0).then(|| format!("{failed} sweep row(s) failed")),
    })
}

pub fn lamb_shift(r: &Resolved, strict: bool) -> Result<Outcome, CliError> {
    let order = r.raw.lamb_shift.as_ref().map_or(1, |l| l.order);
    let gas = r.gas()?;
    let u = r.potential.strength();
    let regime = regime(&gas, u, strict)?;
    let ldl = lamb_shift_ldl(&r.model, &r.potential, &gas, Resolved::lamb_order(order)?)?;
    let (cm, _) = generator_parts(r, &gas, GeneratorKind::Cm, LambOrder::First)?;
    let (hh, _) = discrepancy_estimates(&r.model, &gas, u);
    let report = LambShiftReport {
        metadata: metadata("lamb-shift", r),
        order,
        ldl: flat(&ldl),
        cm: flat(&cm),
        hh_estimate: hh,
        regime,
    };
    Ok(Outcome {
        artifacts: vec![json("lamb_shift.json", &report)?],
        partial_failure: None,
    })
}

/// Writes every artifact into `dir`, or the primary one to stdout.
pub fn emit(outcome: &Outcome, dir: Option<&Path>) -> Result<(), CliError> {
    use std::io::Write;
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            for a in &outcome.artifacts {
                std::fs::write(d.join(a.name), &a.bytes)?;
            }
        }
        None => {
            if let Some(a) = outcome.artifacts.first() {
                std::io::stdout().write_all(&a.bytes)?;
            }
        }
    }
    Ok(())
}
