//! Quantum-correlating power of local channels.
//!
//! Dense linear algebra, discord computation, channel constructors, Bloch
//! commutator algebra and the QCP estimator, plus the `qcp` command line.

pub mod channels;
pub mod cli;
pub mod commutators;
pub mod discord;
pub mod error;
pub mod matrix;
pub mod optimize;
pub mod qcp;
pub mod sampling;
pub mod states;

pub use error::{Error, Result};
pub use matrix::ComplexMatrix;
pub use states::{CQState, DensityMatrix, TwoQubitBloch};
