//! Spectral simulation and verification harness for the nonlinear
//! Schrödinger equation driven by nonlinear multiplicative Stratonovich noise
//!
//! ```text
//! du = (iΔu − iλ|u|^{α−1}u − ½ Σ|e_m|²|u|^{2(γ−1)}u) dt − i Σ e_m |u|^{γ−1}u dβ_m
//! ```
//!
//! on a periodic box. Two integrators are provided: a truncated Picard
//! iteration on the mild (Duhamel) formulation with window chaining, and a
//! Strang split-step scheme whose noise sub-step is solved exactly. The
//! [`montecarlo`] module runs path ensembles on top of either scheme.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod exponents;
pub mod grid;
pub mod io;
pub mod montecarlo;
pub mod noise;
pub mod propagator;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};

pub use num_complex::Complex64;
pub use num_rational::Rational64;
