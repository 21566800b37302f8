//! Statistical-ensemble model of EPR spin pairs.
//!
//! The singlet is treated as an ensemble of spin pairs that share a hidden
//! quantization axis. Pairs that keep phase coherence are *entangled*; pairs
//! that lose it collapse into a correlated product mixture (*disentangled*).
//! The crate provides:
//!
//! * [`qstate`]: spinors, axis Pauli operators, two-spin and Bell states.
//! * [`density`]: EPR density operator, conditional collapse by projection and
//!   partial trace, disentangled pair densities.
//! * [`correlate`]: closed-form joint probabilities, correlation functions,
//!   ensemble averages over sphere and plane, CHSH.
//! * [`mc`]: seeded, shard-invariant Monte Carlo coincidence experiments.
//! * [`teleport`]: coincidence-rate predictors for three teleportation
//!   experiments, synthetic datasets and mixture-fraction fitting.
//! * [`cli`]: configuration and table output for the `eprsim` binary.

pub mod cli;
pub mod correlate;
pub mod density;
pub mod error;
pub mod mc;
pub mod qstate;
pub mod table;
pub mod teleport;

pub use error::{Error, Result};
pub use qstate::{Sign, UnitAxis};
