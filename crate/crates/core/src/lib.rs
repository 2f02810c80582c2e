//! Verification and solving toolkit for rectangular quasi b-metric spaces.
//!
//! * [`space`]: finite and analytic asymmetric distance spaces, axiom scans
//!   and classification.
//! * [`thetaphi`]: comparison functions θ and φ and their sampled validation.
//! * [`contraction`]: θ-, θ-φ- and linear contraction certificates.
//! * [`solver`]: Picard iteration with forward/backward diagnostics.
//! * [`instances`]: worked examples and random/adversarial generators.
//! * [`expr`]: the formula language shared by all of the above.

pub mod cli;
pub mod contraction;
pub mod error;
pub mod expr;
pub mod instances;
pub mod report;
pub mod solver;
pub mod space;
pub mod thetaphi;

pub use error::{Error, Result};
