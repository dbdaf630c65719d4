//! Numerical laboratory for sections, volumes and Fourier transforms of
//! R_θ-invariant star bodies in R^{2n}.

pub mod bodies;
pub mod busemann_petty;
pub mod embedding;
pub mod error;
pub mod fourier;
pub mod frames;
pub mod harmonics;
pub mod quadrature;
pub mod reduce;
pub mod sections;
pub mod spec;
pub mod special;

pub use error::{Error, Result};
