use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::{covariance_of_rows, Matrix};

/// Principal-component projection: the batch mean and the leading
/// eigenvectors of the sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `dim × k`; column `j` is the `j`-th principal direction.
    pub basis: Matrix,
    /// Variances along each basis vector, nonincreasing.
    pub eigenvalues: Vec<f64>,
}

/// Fits a `k`-component PCA to the rows of `samples`.
///
/// The covariance is diagonalised with a symmetric eigensolver
/// (Householder tridiagonalisation followed by implicit QR). Each
/// eigenvector's sign is fixed so its largest-magnitude entry is positive.
pub fn pca_fit(samples: &Matrix, k: usize) -> Result<Pca> {
    let dim = samples.cols();
    if k == 0 || k > dim {
        return Err(Error::InvalidArgument(format!(
            "pca: k = {k} must lie in 1..={dim}"
        )));
    }
    let cov = covariance_of_rows(samples)?;
    let sym = DMatrix::from_row_slice(dim, dim, cov.matrix.as_slice());
    let eig = sym.symmetric_eigen();

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut basis = Matrix::zeros(dim, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (j, &src) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = col
            .iter()
            .fold(0.0f64, |a, &x| if x.abs() > a.abs() { x } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dim {
            basis[(i, j)] = sign * col[i];
        }
        eigenvalues.push(eig.eigenvalues[src]);
    }
    Ok(Pca {
        mean: cov.mean,
        basis,
        eigenvalues,
    })
}

impl Pca {
    pub fn components(&self) -> usize {
        self.basis.cols()
    }

    /// `basisᵀ (x − mean)` for every row `x`.
    pub fn project(&self, samples: &Matrix) -> Result<Matrix> {
        if samples.cols() != self.mean.len() {
            return Err(Error::dims(format!(
                "pca project: samples have {} columns, fit had {}",
                samples.cols(),
                self.mean.len()
            )));
        }
        let centred = crate::numerics::center_rows(samples, &self.mean);
        centred.matmul(&self.basis)
    }

    /// `mean + basis · z` for every row `z`.
    pub fn reconstruct(&self, projected: &Matrix) -> Result<Matrix> {
        let mut out = projected.matmul_bt(&self.basis)?;
        for t in 0..out.rows() {
            for (v, m) in out.row_mut(t).iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        Ok(out)
    }
}
