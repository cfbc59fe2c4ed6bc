//! Decoherence of a small quantum system immersed in a dilute gas.
//!
//! Two Markovian descriptions are provided and compared: the low-density
//! limit (LDL) generator built from Born scattering amplitudes, and the
//! semiclassical collision model (CM) built from straight-line trajectory
//! averages. A Monte Carlo collision simulator checks the CM generator
//! independently.
//!
//! Everything is in dimensionless units with ħ = m = d = 1, where d is the
//! range of the system-particle potential: ν = n d³, θ = kT m d²/ħ² and
//! u = U₀ m d²/ħ². [`model::UnitSystem`] converts from SI.
//!
//! The numerical core is generic over `f32`/`f64` through [`scalar::Real`];
//! the aliases below fix `f64`.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]
pub mod cm;
pub mod colsim;
pub mod compare;
pub mod error;
pub mod ldl;
pub mod liouville;
pub mod model;
pub mod output;
pub mod potentials;
pub mod quadrature;
pub mod scalar;

pub use error::{Error, QuadratureError, Result};
pub use ldl::LambOrder;
pub use liouville::Method;
pub use model::UnitSystem;
pub use potentials::PotentialKind;

pub type CMatrix = scalar::CMatrix<f64>;
pub type GasParameters = model::GasParameters<f64>;
pub type SpinModel = model::SpinModel<f64>;
pub type DensityMatrix = model::DensityMatrix<f64>;
pub type RadialPotential = potentials::RadialPotential<f64>;
pub type TabulatedPotential = potentials::TabulatedPotential<f64>;
pub type LdlCoefficients = ldl::LdlCoefficients<f64>;
pub type CmCoefficients = cm::CmCoefficients<f64>;
pub type GkslGenerator = liouville::GkslGenerator<f64>;
pub type Trajectory = liouville::Trajectory<f64>;
pub type SimConfig = colsim::SimConfig<f64>;
pub type EnsembleResult = colsim::EnsembleResult<f64>;
pub type ComparisonRecord = compare::ComparisonRecord<f64>;
