//! Terminated AR4JA-based protograph LDPC convolutional code ensembles.
//!
//! The crate builds protograph block and terminated convolutional
//! ensembles, computes their BEC density-evolution thresholds and
//! asymptotic minimum-distance growth rates, and checks thresholds
//! empirically with lifted codes and a peeling decoder.

pub mod cli;
pub mod density;
pub mod enumerator;
pub mod error;
pub mod lifting;
pub mod protograph;
pub mod spreading;

pub use error::{Error, Result};
pub use protograph::{BaseMatrix, Rate};
