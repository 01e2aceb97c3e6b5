//! histopatch: deterministic patch extraction, data augmentation, a
//! from-scratch CNN baseline, and majority-vote evaluation for histology
//! image classification.
//!
//! The pipeline runs `patch -> augment -> train -> predict -> vote ->
//! eval`; every stage is a pure function of its inputs and seeds, so full
//! runs are reproducible byte-for-byte regardless of worker count.

pub mod aggregate;
pub mod augment;
pub mod error;
pub mod eval;
pub mod metadata;
pub mod patching;
pub mod raster;
pub mod refnet;
pub mod rng;

pub use error::{Error, Result};
