//! Simulation engine for one-axis twisting in an engineered Dicke model.
//!
//! The crate covers exact no-jump dynamics of the collective spin, Lindblad
//! master equations (collective, boson-coupled, and permutation-invariant
//! local dissipation), quantum-jump trajectory ensembles, and the fidelity and
//! quantum-Fisher-information figures of merit used to judge spin cat states.

pub mod cli;
pub mod density;
pub mod error;
pub mod frameworks;
pub mod linalg;
pub mod local_dissipation;
pub mod master_equation;
pub mod metrics;
pub mod nojump_analytic;
pub mod ode;
pub mod spin_algebra;
pub mod trajectories;

pub use error::{Error, Result};
