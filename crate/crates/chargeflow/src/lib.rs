//! Charged null geodesics on stationary bundle spacetimes over a circle, the
//! isotypic spectra of the associated wave operator, and the trace-formula
//! diagnostics that connect the two.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod lie;
pub mod reduction;
pub mod scenario;
pub mod spectrum;
pub mod trace;

pub use error::{Error, Result};
