//! Contrastive-noise occupancy and semantic mapping with RBF hinge features.

pub mod baselines;
pub mod classifier;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod geometry;
mod kernels;
pub mod optim;
pub mod persist;
mod ply;
pub mod reconstruction;
pub mod sampling;

pub use error::{Error, Result};
