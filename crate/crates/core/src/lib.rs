//! Numerical core for studying the states attained by control-affine systems
//! under wide, linearised two-layer GeLU policies.
//!
//! The crate is `no_std` (with `alloc`); file formats, the CLI and worker pools
//! live in the companion `reachdim-lab` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod activation;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod lie;
pub mod pg;
pub mod policy;
pub mod rng;
pub mod sparse;
pub mod twonn;

pub use error::{Error, Result};

/// Column state vector.
pub type State = nalgebra::DVector<f64>;
/// Action vector, length `d_a`.
pub type Action = nalgebra::DVector<f64>;
