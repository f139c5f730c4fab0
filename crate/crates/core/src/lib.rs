//! Effective bending–torsion models of inhomogeneous elastic rods and a
//! numerical check of their convergence from three-dimensional elasticity.

pub mod algebra;
pub mod analysis;
pub mod error;
pub mod linalg;
pub mod material;
pub mod optim;
pub mod rod1d;
pub mod rod3d;
pub mod xsection;

pub use error::{Error, Result};
