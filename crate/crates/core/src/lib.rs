//! Numerical laboratory for the parabolic complex Monge-Ampère flow
//! `∂φ/∂t = log((θ_t + dd^c φ)^n / Ω) − F(t, z, φ)` on flat tori.

// NaN must fail guards like `!(x > 0.0)`, which is why they are written negated
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod psh;
mod serde_float;
pub mod torus;
pub mod verify;

pub use error::{Error, Result};
