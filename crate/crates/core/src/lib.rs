//! Quantum state tomography toolkit.
//!
//! Simulates Pauli-basis measurements of small quantum states and
//! reconstructs density matrices by linear inversion, iterative maximum
//! likelihood, Bayesian MCMC, variational purification, a two-circuit
//! amplitude/phase model, and quantum phase estimation (qPCA).

pub mod bayes;
pub mod circuit;
pub mod classical;
pub mod cobyla;
pub mod error;
pub mod harness;
pub mod measurement;
pub mod numeric;
pub mod qpca;
pub mod result;
pub mod rng;
pub mod state;
pub mod tolerance;
pub mod variational;

pub use error::{QstError, Result};
