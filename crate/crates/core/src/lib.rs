//! Simulation-optimization engine for kidney exchange programs.
//!
//! Pairs are scored under antigen, allele and eplet HLA compatibility,
//! time-instant matching problems are solved exactly over cycles of length
//! two and three, and a discrete-event simulation evaluates effectiveness
//! and equity over a time period. Equity weights can be searched to close
//! gaps between subpopulations.

pub mod compatibility;
pub mod equity;
pub mod error;
pub mod hla;
pub mod kep;
pub mod pool;
pub mod scalar;
pub mod sim;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

/// Exact rational weights.
pub type Exact = num_rational::Ratio<i128>;

pub type FloatInstance = kep::Instance<f64>;
pub type ExactInstance = kep::Instance<Exact>;
pub type FloatSolution = kep::Solution<f64>;
pub type ExactSolution = kep::Solution<Exact>;
pub type FloatEquityInputs = equity::EquityInputs<f64>;
pub type ExactEquityInputs = equity::EquityInputs<Exact>;
