//! Deep Ritz minimization of nonconvex two-well gradient energies.
//!
//! The scalar deformation field is a small fully connected network; its
//! parameters are trained to minimize a Monte Carlo estimate of the stored
//! energy plus a boundary penalty. See the crate README for an overview.

pub mod analysis;
pub mod autodiff;
pub mod energy;
pub mod error;
pub mod network;
pub mod optimize;
pub mod sampling;

pub use error::{Error, Result};
