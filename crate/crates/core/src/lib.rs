//! Numerical lab for the double-phase operator
//! `−div(|Du|^{p−2}Du + a(x)|Du|^{q−2}Du) = ε`.
//!
//! The equation is solved variationally (P1 elements, Newton) and in the
//! viscosity sense (monotone finite differences); the `harness` module runs
//! the structural studies that compare the two.

mod banded;
pub mod error;
pub mod mesh;
pub mod norms;
pub mod operator;
pub mod variational;
pub mod viscosity;
pub mod harness;

pub use error::{Error, Result};
