//! failforge: adversarial failure-mode discovery for black-box
//! manipulation policies.
//!
//! A PPO adversary learns to pick environment perturbations that make a
//! scripted policy under test fail on a desk-scale pick-and-place task.
//! The trained adversary's action distribution is then read out as a
//! ranked, entropy-summarized failure-mode profile and validated against
//! a brute-force per-action enumeration oracle.

pub mod analysis;
pub mod digest;
pub mod env;
pub mod error;
pub mod nn;
pub mod oracle;
pub mod ppo;
pub mod report;
pub mod rng;

pub use error::{Error, Result};

/// Tool version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
