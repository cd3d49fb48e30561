//! Localization of a stationary emitter transmitting an unknown signal, from
//! frequency-domain samples collected at synchronized base stations in a dense
//! multipath environment.
//!
//! The crate is organized bottom-up:
//!
//! - [`scenario`]: geometry, time of arrival and the randomized placement protocol.
//! - [`channel`]: power-delay profiles, multipath realizations and the frequency
//!   covariance `H = U U†` of each channel.
//! - [`signal`]: transmit signals and frequency-domain synthesis of observations.
//! - [`gpm`]: the generalized power method for unit-modulus quadratic maximization.
//! - [`estimator`]: the USAGE estimator (magnitude estimate, per-hypothesis cost
//!   matrix, grid argmax).
//! - [`cwc`]: coherent window combining, folding `D` windows into one.
//! - [`crlb`]: Fisher information and the position Cramér–Rao bound.
//! - [`harness`]: the Monte Carlo benchmark protocol and result emission.
//!
//! Candidate evaluation and Monte Carlo trials run on rayon when the
//! `parallel` feature is enabled (the default); [`Execution`] selects the path
//! per call so both can be compared in one binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod channel;
pub mod crlb;
pub mod cwc;
mod error;
pub mod estimator;
mod exec;
pub mod gpm;
pub mod harness;
pub mod io;
pub mod scenario;
pub mod signal;

pub use error::{Error, Result};
pub use exec::Execution;

/// Dense complex matrix used throughout.
pub type CMatrix = nalgebra::DMatrix<num_complex::Complex64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<num_complex::Complex64>;

pub use num_complex::Complex64;
