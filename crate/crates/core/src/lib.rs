//! Stabilization of approximate polynomial relations for matrices.
//!
//! Given a polynomial `p` and a matrix `X` with `‖p(X)‖` small, the lifter
//! produces a nearby `X′` with `p(X′) = 0` up to rounding and `‖X′‖` bounded.

pub mod error;
pub mod lifter;
pub mod mat;
pub mod nilpotent;
pub mod normest;
pub mod poly;
pub mod random;
pub mod seqmodel;
pub mod spectral;
pub mod trials;

pub use error::{Error, Result};
pub use mat::{Mat, C64};
pub use poly::{Polynomial, Regime, Root};
