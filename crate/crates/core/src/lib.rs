//! Over-the-air phase calibration of distributed antenna arrays.
//!
//! The crate models per-antenna transmit/receive phase offsets, simulates
//! noisy over-the-air phase measurements, and implements the calibration
//! procedures that make arrays beamform coherently: full (F) and reciprocity
//! (R) calibration within one array, alignment between arrays, and the
//! dual-frequency search that removes the half-angle ambiguity.

pub mod array;
pub mod beamform;
pub mod calibrators;
pub mod error;
pub mod experiments;
pub mod measurement;
pub mod phase;

pub use error::{Error, Result};
pub use phase::Phase;
