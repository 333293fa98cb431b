//! Gram-Hadamard density operators for open quantum spin systems.
//!
//! The crate provides positivity-preserving neural parametrizations of mixed
//! states (GHDO and its autoregressive form AGHDO), exact direct sampling of
//! their diagonal and of the joint proposal `p_α(σ,η)`, local estimators for
//! Lindblad dynamics, a stochastic time-dependent variational integrator for
//! reaching steady states, and a dense exact-diagonalization oracle for
//! small systems.

pub mod cache;
pub mod checkpoint;
pub mod cg;
pub mod error;
pub mod ghdo;
pub mod lindblad;
pub mod linalg;
pub mod matrix_io;
pub mod model;
pub mod netcore;
pub mod oracle;
pub mod sampling;
pub mod spins;
pub mod tdvp;
pub mod verify;

pub use error::{GhdoError, Result};
pub use model::{AmplitudeModel, VariationalModel};
pub use netcore::{AghdoNetwork, NetworkSpec};
pub use spins::{AmplitudeTable, SpinConfig};
