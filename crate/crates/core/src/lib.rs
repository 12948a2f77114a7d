//! Unsupervised learning from time series by balancing two objectives on a
//! dense tanh network: a temporal-smoothing penalty on every unit's
//! frame-to-frame change, against a log-determinant "entropy" reward on
//! every layer's activation covariance.
//!
//! - [`numerics`]: matrices, covariance, Cholesky, log-det, PCA
//! - [`network`]: forward pass recording all activations, backward pass
//!   taking adjoints on every layer
//! - [`objective`]: smoothing and entropy values with activation adjoints
//! - [`optimizer`]: the ADAM update
//! - [`datagen`]: clock-hands and shaky-camera MNIST movie synthesis
//! - [`eval`]: affine readout and nearest-neighbour accuracy protocols
//! - [`config`], [`checkpoint`], [`train`], [`experiments`]: the experiment driver
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod exec;
pub mod experiments;
pub mod network;
pub mod numerics;
pub mod objective;
pub mod optimizer;
pub mod train;

pub use error::{Error, Result};
pub use numerics::Matrix;
