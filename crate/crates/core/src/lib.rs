//! Numerical convex integration for the two-dimensional Monge-Ampere and
//! von Karman systems: sampled fields, mollification, conformal
//! decompositions, corrugation steps, stages and the outer iteration.

pub mod decompose;
pub mod error;
pub mod fft;
pub mod harness;
pub mod jet;
pub mod field;
pub mod mollify;
pub mod nk;
pub mod random;
pub mod smooth;
pub mod stage;
pub mod steps;

pub use error::{Error, Result};
