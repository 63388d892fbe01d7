//! Damped second order gradient systems, their deformed energies and
//! Kurdyka-Łojasiewicz rate checks.
//!
//! The modules follow the analysis pipeline: [`potential`] defines `G`,
//! [`dynamics`] integrates `u'' + γu' + ∇G(u) = 0`, [`deformation`] certifies
//! the angle condition for `ℰ_λ`, [`desingularize`] handles `φ` and the
//! worst-case curve, [`levelset`] probes `min ½‖∇G‖²` on level sets, and
//! [`rates`] checks the envelopes on trajectories.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod deformation;
pub mod desingularize;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod levelset;
pub mod ode;
pub mod potential;
pub mod rates;
pub mod sampling;

pub use deformation::{AngleCertificate, DeformedEnergy};
pub use desingularize::{Desingularizer, WorstCaseCurve};
pub use dynamics::{Classification, DynamicsConfig, PhaseState, Trajectory};
pub use error::{Error, Result};
pub use levelset::LevelSetProfile;
pub use potential::{CatalogEntry, PotentialSpec};
pub use rates::RateReport;
