//! Dense linear algebra shared by the rest of the crate: matrices, sample
//! covariance, Cholesky-based log-determinants and inverses, and PCA.

mod linalg;
mod matrix;
mod pca;

pub use linalg::{
    center_rows, cholesky, covariance, covariance_of_rows, logdet_spd, spd_inverse, CholeskyFactor,
    CovarianceEstimate,
};
pub use matrix::{axpy, dot, Matrix};
pub use pca::{pca_fit, Pca};
