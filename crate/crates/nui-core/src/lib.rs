//! Toolkit for non-uniform illumination perturbations: mask generation,
//! image attacks, dataset augmentation and a sweep/evaluation harness
//! around external classifiers.

pub mod attack;
pub mod buffer;
pub mod error;
pub mod eval;
pub mod exec;
pub mod dataset;
pub mod io;
pub mod mask;

pub use error::{Error, Result};
