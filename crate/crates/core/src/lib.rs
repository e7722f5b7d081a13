//! Joint direction-of-arrival estimation and distorted-sensor detection.
//!
//! The measurements of a uniform linear array with a few miscalibrated
//! sensors are modelled as `Y = (I + diag(γ)) Z + N`, where `Z = A S` is
//! low rank and `γ` is sparse and box bounded. [`decomposer::run`] recovers
//! `(Ẑ, γ̂)` by alternating a closed-form smoothed-nuclear-norm update of `Z`
//! with a box-constrained LASSO for `γ` ([`box_lasso`]). The DOAs then come
//! from a MUSIC search over `Ẑ` ([`doa`]) and the distorted sensors from a
//! gap threshold on `|γ̂|` ([`detector`]). [`bench`] runs Monte-Carlo sweeps
//! over scenarios drawn by [`array_sim`].
//!
//! Each outer iteration costs `O(M³)` for the Hermitian eigendecomposition
//! and the `M×M` solve, plus `O(M·T)` per inner LASSO iteration.

// `!(x > 0.0)` is used on purpose so that NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array_sim;
pub mod bench;
pub mod box_lasso;
pub mod config;
pub mod decomposer;
pub mod detector;
pub mod doa;
mod error;
pub mod files;
pub mod numerics;

pub use error::{Error, Result};
pub use numerics::{CMatrix, CVector};

pub use num_complex::Complex64;
