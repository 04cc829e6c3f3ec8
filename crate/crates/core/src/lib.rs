//! Tracking control of a single qubit under thermal and dephasing noise.
//!
//! Given a population trajectory P(t) and a phase trajectory Φ(t), the crate
//! computes the coherence magnitude the dynamics force on the state,
//! synthesizes the field that realizes the prescription, propagates the
//! master equation to verify it, and maps which population transfers are
//! reachable with and without noise.

pub mod coherence;
pub mod config;
pub mod error;
pub mod model;
pub mod parallel;
pub mod profiles;
pub mod propagate;
pub mod quadrature;
pub mod reachability;
pub mod synthesis;

pub use error::{Error, Result};
