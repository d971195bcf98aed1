//! Single-neuron stealth attacks on generic classifiers, the closed-form
//! probability bounds that govern them, and seeded Monte Carlo experiments
//! that verify every bound empirically.
//!
//! The crate is organized around the pipeline:
//!
//! * [`geometry`] - vectors, the unit-ball domain, uniform ball/sphere
//!   sampling, and the per-trial random-stream contract;
//! * [`activations`] - the nonlinearities an attack neuron can use;
//! * [`backbone`] - evaluatable classifier maps and model files;
//! * [`adversarial`] - the synthetic SmAC family, the shell admission test,
//!   and the adversarial-example existence bounds;
//! * [`stealth`] - attack construction, the separation event, and the
//!   stealth success bound;
//! * [`harness`] - experiments, confidence intervals, reports;
//! * [`cli`] - the `stealth-lab` command-line front end.

pub mod activations;
pub mod adversarial;
pub mod backbone;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod stealth;

pub use error::{Error, Result};
