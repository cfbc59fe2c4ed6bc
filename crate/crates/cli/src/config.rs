//! JSON run configuration.
//!
//! Matrices are flat row-major arrays of `[re, im]` pairs. Physical inputs
//! are dimensionless by default; with a `units` block the gas and the
//! potential strength may be given in SI instead (times stay
//! dimensionless).

use std::path::{Path, PathBuf};

use gasmaster::colsim::TauMode;
use gasmaster::model::UnitSystem;
use gasmaster::{CMatrix, DensityMatrix, GasParameters, LambOrder, Method, RadialPotential, SpinModel, TabulatedPotential};
use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub units: Option<Units>,
    pub model: ModelSpec,
    pub potential: PotentialSpec,
    pub gas: GasSpec,
    #[serde(default)]
    pub evolve: Option<EvolveSpec>,
    #[serde(default)]
    pub simulate: Option<SimulateSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub lamb_shift: Option<LambShiftSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub mass_kg: f64,
    pub range_m: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub dim_s: usize,
    pub dim_g: usize,
    /// Defaults to zero.
    #[serde(default)]
    pub h_s: Option<Vec<[f64; 2]>>,
    pub f: Vec<[f64; 2]>,
    /// Defaults to uniform.
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindSpec {
    Gaussian,
    SquareWell,
    Tabulated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: KindSpec,
    /// Strength. For a table it rescales the tabulated values so that
    /// max |V| = u.
    #[serde(default)]
    pub u: Option<f64>,
    #[serde(default)]
    pub u_joule: Option<f64>,
    /// Two-column CSV (r, V), relative to the config file.
    #[serde(default)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSpec {
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub density_per_m3: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub temperature_k: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Ldl,
    Cm,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSpec {
    pub rho0: Vec<[f64; 2]>,
    pub t_grid: Vec<f64>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_generator")]
    pub generator: GeneratorKind,
    #[serde(default = "default_order")]
    pub lamb_order: u8,
}

fn default_method() -> Method {
    Method::Expm
}

fn default_generator() -> GeneratorKind {
    GeneratorKind::Ldl
}

fn default_order() -> u8 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    /// Falls back to `evolve.rho0`.
    #[serde(default)]
    pub rho0: Option<Vec<[f64; 2]>>,
    pub trajectories: usize,
    pub seed: u64,
    pub sample_times: Vec<f64>,
    /// Defaults to the last sample time.
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default = "default_tau")]
    pub tau_mode: TauMode,
}

fn default_tau() -> TauMode {
    TauMode::Straight
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub theta_grid: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambShiftSpec {
    #[serde(default = "default_order")]
    pub order: u8,
}

/// A scalar replaced by a command-line flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    pub field: String,
    pub config: Option<serde_json::Value>,
    pub flag: serde_json::Value,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub generator: Option<GeneratorKind>,
    pub seed: Option<u64>,
    pub trajectories: Option<usize>,
}

/// Everything resolved to dimensionless library types.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: SpinModel,
    pub potential: RadialPotential,
    pub nu: f64,
    pub theta: Option<f64>,
    pub units: Option<UnitSystem>,
    pub raw: RunConfig,
    pub overrides: Vec<Override>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn parse_matrix(name: &str, entries: &[[f64; 2]], d: usize) -> Result<CMatrix, CliError> {
    if entries.len() != d * d {
        return Err(config_err(format!(
            "{name}: expected {} [re, im] entries for a {d}x{d} matrix, got {}",
            d * d,
            entries.len()
        )));
    }
    Ok(CMatrix::from_row_iterator(d, d, entries.iter().map(|&[re, im]| Complex::new(re, im))))
}

pub fn parse_state(name: &str, entries: &[[f64; 2]], d: usize) -> Result<DensityMatrix, CliError> {
    DensityMatrix::new(parse_matrix(name, entries, d)?).map_err(|e| config_err(format!("{name}: {e}")))
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn pick(name: &str, dimensionless: Option<f64>, si: Option<f64>, si_name: &str, units: Option<UnitSystem>, to: impl Fn(&UnitSystem, f64) -> f64) -> Result<Option<f64>, CliError> {
    match (dimensionless, si) {
        (Some(_), Some(_)) => Err(config_err(format!("give either {name} or {si_name}, not both"))),
        (Some(x), None) => Ok(Some(x)),
        (None, Some(x)) => match units {
            Some(u) => Ok(Some(to(&u, x))),
            None => Err(config_err(format!("{si_name} needs a units block"))),
        },
        (None, None) => Ok(None),
    }
}

impl RunConfig {
    /// Validates the file and applies command-line overrides.
    pub fn resolve(mut self, base_dir: &Path, flags: &Overrides) -> Result<Resolved, CliError> {
        let units = match self.units {
            Some(u) => Some(UnitSystem::new(u.mass_kg, u.range_m).map_err(|e| config_err(format!("units: {e}")))?),
            None => None,
        };

        let m = &self.model;
        let (ds, dg) = (m.dim_s, m.dim_g);
        if ds == 0 || dg == 0 {
            return Err(config_err("model: dimensions must be positive"));
        }
        let h_s = match &m.h_s {
            Some(h) => parse_matrix("model.h_s", h, ds)?,
            None => CMatrix::zeros(ds, ds),
        };
        let f = parse_matrix("model.f", &m.f, ds * dg)?;
        let mu = m.mu.clone().unwrap_or_else(|| vec![1.0 / dg as f64; dg]);
        let model = SpinModel::new(ds, dg, h_s, f, mu).map_err(|e| config_err(format!("model: {e}")))?;

        let p = &self.potential;
        let u = pick("potential.u", p.u, p.u_joule, "potential.u_joule", units, |s, x| s.energy_to_u(x))?;
        let potential = match p.kind {
            KindSpec::Gaussian | KindSpec::SquareWell => {
                if p.table.is_some() {
                    return Err(config_err("potential.table is only valid for kind = tabulated"));
                }
                let u = u.ok_or_else(|| config_err("potential.u is required"))?;
                if !u.is_finite() {
                    return Err(config_err("potential.u must be finite"));
                }
                if p.kind == KindSpec::Gaussian {
                    RadialPotential::gaussian(u)
                } else {
                    RadialPotential::square_well(u)
                }
            }
            KindSpec::Tabulated => {
                let rel = p.table.as_ref().ok_or_else(|| config_err("potential.table is required for kind = tabulated"))?;
                let path = if rel.is_absolute() { rel.clone() } else { base_dir.join(rel) };
                let table = TabulatedPotential::from_csv_path(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                let pot = RadialPotential::Tabulated(table);
                match u {
                    Some(u) => pot.with_strength(u).map_err(|e| config_err(format!("potential: {e}")))?,
                    None => pot,
                }
            }
        };

        let g = &self.gas;
        let nu = pick("gas.nu", g.nu, g.density_per_m3, "gas.density_per_m3", units, |s, x| s.density_to_nu(x))?
            .ok_or_else(|| config_err("gas.nu is required"))?;
        let theta = pick("gas.theta", g.theta, g.temperature_k, "gas.temperature_k", units, |s, x| s.temperature_to_theta(x))?;
        GasParameters::new(nu, theta.unwrap_or(1.0)).map_err(|e| config_err(format!("gas: {e}")))?;

        let mut overrides = Vec::new();
        if let Some(gk) = flags.generator {
            let ev = self.evolve.as_mut();
            let old = ev.as_ref().map(|e| serde_json::to_value(e.generator).unwrap_or_default());
            if let Some(e) = ev {
                e.generator = gk;
            }
            overrides.push(Override {
                field: "evolve.generator".into(),
                config: old,
                flag: serde_json::to_value(gk).unwrap_or_default(),
            });
        }
        if let Some(seed) = flags.seed {
            let old = self.simulate.as_ref().map(|s| serde_json::Value::from(s.seed));
            if let Some(s) = self.simulate.as_mut() {
                s.seed = seed;
            }
            overrides.push(Override {
                field: "simulate.seed".into(),
                config: old,
                flag: seed.into(),
            });
        }
        if let Some(n) = flags.trajectories {
            let old = self.simulate.as_ref().map(|s| serde_json::Value::from(s.trajectories));
            if let Some(s) = self.simulate.as_mut() {
                s.trajectories = n;
            }
            overrides.push(Override {
                field: "simulate.trajectories".into(),
                config: old,
                flag: n.into(),
            });
        }

        Ok(Resolved {
            model,
            potential,
            nu,
            theta,
            units,
            raw: self,
            overrides,
        })
    }
}

impl Resolved {
    pub fn gas(&self) -> Result<GasParameters, CliError> {
        let theta = self.theta.ok_or_else(|| config_err("gas.theta is required for this command"))?;
        GasParameters::new(self.nu, theta).map_err(|e| config_err(format!("gas: {e}")))
    }

    pub fn lamb_order(order: u8) -> Result<LambOrder, CliError> {
        LambOrder::try_from(order).map_err(|e| config_err(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "model": {"dim_s": 2, "dim_g": 2, "f": [
                [1,0],[0,0],[0,0],[0,0],
                [0,0],[-1,0],[0,0],[0,0],
                [0,0],[0,0],[-1,0],[0,0],
                [0,0],[0,0],[0,0],[1,0]]},
            "potential": {"kind": "square_well", "u": 0.1},
            "gas": {"nu": 0.01, "theta": 100.0}
        })
    }

    #[test]
    fn minimal_config_resolves() {
        let cfg: RunConfig = serde_json::from_value(minimal()).unwrap();
        let r = cfg.resolve(Path::new("."), &Overrides::default()).unwrap();
        assert_eq!(r.model.mu(), &[0.5, 0.5]);
        assert_eq!(r.gas().unwrap().theta, 100.0);
        assert!(r.overrides.is_empty());
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = minimal();
        v["gas"]["pressure"] = 1.0.into();
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
        let mut v = minimal();
        v["extra"] = 1.into();
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
    }

    #[test]
    fn si_needs_units_and_exclusive_fields() {
        let mut v = minimal();
        v["gas"] = serde_json::json!({"nu": 0.01, "temperature_k": 300.0});
        let cfg: RunConfig = serde_json::from_value(v.clone()).unwrap();
        assert!(matches!(cfg.resolve(Path::new("."), &Overrides::default()), Err(CliError::Config(_))));
        v["units"] = serde_json::json!({"mass_kg": 6.6e-27, "range_m": 1e-10});
        let cfg: RunConfig = serde_json::from_value(v.clone()).unwrap();
        let r = cfg.resolve(Path::new("."), &Overrides::default()).unwrap();
        let us = UnitSystem::new(6.6e-27, 1e-10).unwrap();
        assert_eq!(r.theta, Some(us.temperature_to_theta(300.0)));
        v["gas"]["theta"] = 1.0.into();
        let cfg: RunConfig = serde_json::from_value(v).unwrap();
        assert!(cfg.resolve(Path::new("."), &Overrides::default()).is_err());
    }

    #[test]
    fn flags_override_and_are_recorded() {
        let mut v = minimal();
        v["simulate"] = serde_json::json!({"trajectories": 10, "seed": 1, "sample_times": [1.0]});
        let cfg: RunConfig = serde_json::from_value(v).unwrap();
        let flags = Overrides {
            seed: Some(42),
            ..Default::default()
        };
        let r = cfg.resolve(Path::new("."), &flags).unwrap();
        assert_eq!(r.raw.simulate.as_ref().unwrap().seed, 42);
        assert_eq!(r.overrides.len(), 1);
        assert_eq!(r.overrides[0].config, Some(1.into()));
    }

    #[test]
    fn bad_matrix_size() {
        let mut v = minimal();
        v["model"]["h_s"] = serde_json::json!([[1, 0]]);
        let cfg: RunConfig = serde_json::from_value(v).unwrap();
        assert!(cfg.resolve(Path::new("."), &Overrides::default()).is_err());
    }
}
