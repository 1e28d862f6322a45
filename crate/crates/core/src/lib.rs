//! Design-based inference for treatment effects on right-censored failure
//! times when units may interfere with one another.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation: the interference structure and exposures, causal models that
//! map observed times to the uniformity trial and back, censoring-aware test
//! statistics, the permutation engine, confidence sets by test inversion and
//! the simulation study generators. File formats, threading and the command
//! line live in the `netsurv` companion crate.
//!
//! ```
//! use netsurv_core::interference::InterferenceMatrix;
//! use netsurv_core::causal::{ModelSpec, Theta, to_uniformity};
//!
//! let a = InterferenceMatrix::from_edges(&[(0, 1), (1, 0)], 2, false).unwrap();
//! let model: ModelSpec = "add-G".parse().unwrap();
//! let y0 = to_uniformity(&[10.0, 20.0], &[true, false], &a, None, &model, Theta::new(0.5, 1.0)).unwrap();
//! assert!((y0[0] - 10.0 * (-0.5f64).exp()).abs() < 1e-12);
//! assert!((y0[1] - 20.0 * (-1.0f64).exp()).abs() < 1e-12);
//! ```

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod causal;
pub mod error;
pub mod exec;
pub mod inference;
pub mod interference;
pub mod randomize;
pub mod rng;
pub mod simulate;
pub mod survival;

pub use error::{Error, Result};
