//! Distributed Bayesian filtering of dynamic finite-state hidden Markov
//! models over multi-agent networks.
//!
//! The library provides:
//! - finite-state transition models with ergodicity statistics
//!   ([`markov`]),
//! - per-agent observation likelihood families ([`likelihood`]),
//! - graph topologies and doubly-stochastic combination matrices
//!   ([`network`]),
//! - the diffusion HMM filter and its centralized / arithmetic-averaging /
//!   consensus / adaptive-social-learning rivals ([`filters`]),
//! - Monte Carlo risk and error-probability estimators, asymptotic bound
//!   evaluation, and grid-based density-evolution oracles ([`analysis`]),
//! - a declarative simulation harness with deterministic seeding and CSV
//!   output ([`harness`]).

pub mod analysis;
pub mod error;
pub mod filters;
pub mod harness;
pub mod likelihood;
pub mod markov;
pub mod network;
pub mod seed;

pub use error::{Error, Result};
