//! Probabilistic amplitude shaping for nonlinear fiber channels:
//! constellations, distribution matchers, frame assembly, split-step
//! channel simulation, first-order perturbation models and sequence
//! selection.

pub mod constellation;
pub mod error;
pub mod fiber;
pub mod matchers;
pub mod numeric;
pub mod pas;
pub mod perturbation;
pub mod selection;

pub use error::{Error, Result};
