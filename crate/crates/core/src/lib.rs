//! Computable companions to bounded point derivations on the algebra
//! `A_α(U)` of little-Lipschitz holomorphic functions on a swiss-cheese
//! domain `U`.
//!
//! * [`geometry`]: domains, annuli, distances, nontangential rays.
//! * [`content`]: content bounds, the Wiener-type series and a domain designer.
//! * [`function`]: Cauchy-kernel test functions with exact derivatives and
//!   Lipschitz bounds, including families whose poles cluster at `b`.
//! * [`measure`]: atomic pair measures, the functional `T₁` they define and
//!   its Cauchy transforms.
//! * [`estimates`]: falsification harnesses for the growth lemmas and
//!   transform identities.
//! * [`diffquot`]: nontangential difference quotients against the
//!   derivation value.

pub mod content;
pub mod diffquot;
pub mod error;
pub mod estimates;
pub mod fixtures;
pub mod function;
pub mod geometry;
pub mod io;
pub mod measure;
pub mod numeric;
pub mod plot;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// A point of the complex plane.
pub type Point = Complex64;
