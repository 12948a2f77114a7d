use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Sample covariance of a batch, with divisor `sample_count - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: Matrix,
    pub sample_count: usize,
    pub mean: Vec<f64>,
}

/// Covariance of a sequence of equal-length sample vectors.
pub fn covariance<R: AsRef<[f64]>>(samples: &[R]) -> Result<CovarianceEstimate> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let x = Matrix::from_rows(samples)?;
    covariance_of_rows(&x)
}

/// Covariance treating each row of `x` as one sample.
///
/// Two passes: the mean first, then the centred cross products. The result
/// is exactly symmetric since entries (i, j) and (j, i) accumulate the same
/// products in the same order.
pub fn covariance_of_rows(x: &Matrix) -> Result<CovarianceEstimate> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    if x.cols() == 0 {
        return Err(Error::dims("covariance: samples have length 0"));
    }
    let mean = x.column_means();
    let centred = center_rows(x, &mean);
    let mut matrix = centred.matmul_at(&centred)?;
    matrix.scale(1.0 / (n - 1) as f64);
    Ok(CovarianceEstimate {
        matrix,
        sample_count: n,
        mean,
    })
}

/// Subtracts `mean` from every row.
pub fn center_rows(x: &Matrix, mean: &[f64]) -> Matrix {
    let mut c = x.clone();
    for t in 0..c.rows() {
        for (v, m) in c.row_mut(t).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    c
}

/// Lower-triangular Cholesky factor of `m + jitter·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: Matrix,
}

impl CholeskyFactor {
    pub fn new(m: &Matrix, jitter: f64) -> Result<Self> {
        let (rows, cols) = m.shape();
        if rows != cols || rows == 0 {
            return Err(Error::dims(format!(
                "cholesky: {rows}x{cols} is not square"
            )));
        }
        if !(jitter >= 0.0) {
            return Err(Error::InvalidArgument(format!("negative jitter {jitter}")));
        }
        let scale = m.as_slice().iter().fold(1.0f64, |a, x| a.max(x.abs()));
        let asym = m.max_asymmetry();
        if asym > 1e-9 * scale {
            return Err(Error::NotSymmetric(asym));
        }

        let n = rows;
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = m[(i, j)];
                if i == j {
                    s += jitter;
                }
                let (li, lj) = (l.row(i), l.row(j));
                s -= li[..j]
                    .iter()
                    .zip(&lj[..j])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: i });
                    }
                    l[(i, i)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn into_lower(self) -> Matrix {
        self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.dim())
            .map(|i| self.lower[(i, i)].ln())
            .sum::<f64>()
    }

    /// Inverse of the lower factor (also lower triangular).
    pub fn lower_inverse(&self) -> Matrix {
        let n = self.dim();
        let l = &self.lower;
        let mut inv = Matrix::zeros(n, n);
        for j in 0..n {
            inv[(j, j)] = 1.0 / l[(j, j)];
            for i in j + 1..n {
                let mut s = 0.0;
                for k in j..i {
                    s += l[(i, k)] * inv[(k, j)];
                }
                inv[(i, j)] = -s / l[(i, i)];
            }
        }
        inv
    }

    /// `(L Lᵀ)⁻¹ = L⁻ᵀ L⁻¹`, exactly symmetric.
    pub fn inverse(&self) -> Matrix {
        let linv = self.lower_inverse();
        linv.matmul_at(&linv).expect("square factor")
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::dims("cholesky solve: rhs length"));
        }
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[(i, k)] * y[k]).sum();
            y[i] = (y[i] - s) / l[(i, i)];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[(k, i)] * y[k]).sum();
            y[i] = (y[i] - s) / l[(i, i)];
        }
        Ok(y)
    }
}

/// Lower-triangular `L` with `L·Lᵀ = m + jitter·I`.
pub fn cholesky(m: &Matrix, jitter: f64) -> Result<Matrix> {
    CholeskyFactor::new(m, jitter).map(CholeskyFactor::into_lower)
}

/// `log det(m + jitter·I)` for symmetric positive definite `m`.
pub fn logdet_spd(m: &Matrix, jitter: f64) -> Result<f64> {
    Ok(CholeskyFactor::new(m, jitter)?.logdet())
}

/// `(m + jitter·I)⁻¹` computed through the Cholesky factor.
pub fn spd_inverse(m: &Matrix, jitter: f64) -> Result<Matrix> {
    Ok(CholeskyFactor::new(m, jitter)?.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    /// AᵀA + I.
    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let a = random_matrix(rng, n + 2, n);
        let mut m = a.matmul_at(&a).unwrap();
        m.add_diagonal(1.0);
        m
    }

    /// Laplace expansion along the first row.
    fn cofactor_det(m: &Matrix) -> f64 {
        let n = m.rows();
        if n == 1 {
            return m[(0, 0)];
        }
        let mut det = 0.0;
        for j in 0..n {
            let minor_rows: Vec<Vec<f64>> = (1..n)
                .map(|i| (0..n).filter(|&c| c != j).map(|c| m[(i, c)]).collect())
                .collect();
            let minor = Matrix::from_rows(&minor_rows).unwrap();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            det += sign * m[(0, j)] * cofactor_det(&minor);
        }
        det
    }

    fn two_pass_oracle(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = samples.len() as f64;
        let d = samples[0].len();
        let mut mean = vec![0.0; d];
        for s in samples {
            for k in 0..d {
                mean[k] += s[k] / n;
            }
        }
        let mut cov = vec![vec![0.0; d]; d];
        for s in samples {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]) / (n - 1.0);
                }
            }
        }
        (mean, cov)
    }

    #[test]
    fn covariance_of_constant_is_zero() {
        let c = covariance(&[vec![0.0], vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(c.matrix, Matrix::zeros(1, 1));
        assert_eq!(c.mean, vec![0.0]);
        assert_eq!(c.sample_count, 3);
    }

    #[test]
    fn covariance_symmetric_pair() {
        let c = covariance(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        assert_eq!(
            c.matrix,
            Matrix::from_rows(&[[2.0, 0.0], [0.0, 0.0]]).unwrap()
        );
        assert_eq!(c.mean, vec![0.0, 0.0]);
    }

    #[test]
    fn covariance_errors() {
        assert!(matches!(
            covariance(&[vec![1.0]]),
            Err(Error::InsufficientSamples { got: 1, .. })
        ));
        assert!(matches!(
            covariance(&[vec![1.0], vec![1.0, 2.0]]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn covariance_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let c = covariance(&samples).unwrap();
        let (mean, cov) = two_pass_oracle(&samples);
        for i in 0..3 {
            assert_relative_eq!(c.mean[i], mean[i], max_relative = 1e-12);
            for (j, v) in cov[i].iter().enumerate() {
                assert_relative_eq!(c.matrix[(i, j)], *v, max_relative = 1e-12);
            }
        }
        assert_eq!(c.matrix.max_asymmetry(), 0.0);
    }

    #[test]
    fn cholesky_identity() {
        assert_eq!(
            cholesky(&Matrix::identity(3), 0.0).unwrap(),
            Matrix::identity(3)
        );
    }

    #[test]
    fn cholesky_two_by_two() {
        let m = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let l = cholesky(&m, 0.0).unwrap();
        let expected = Matrix::from_rows(&[[2.0, 0.0], [1.0, 2f64.sqrt()]]).unwrap();
        assert!(l.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn cholesky_rank_one_fails_at_pivot_one() {
        let m = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            cholesky(&m, 0.0),
            Err(Error::NotPositiveDefinite { pivot: 1 })
        ));
        // jitter rescues it
        assert!(cholesky(&m, 1e-6).is_ok());
    }

    #[test]
    fn cholesky_rejects_asymmetric() {
        let m = Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&m, 0.0), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(logdet_spd(&Matrix::identity(5), 0.0).unwrap(), 0.0);
        let d = Matrix::from_diag(&[2.0, 3.0]);
        assert_relative_eq!(
            logdet_spd(&d, 0.0).unwrap(),
            6f64.ln(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn logdet_matches_cofactor_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_spd(&mut rng, 6);
        let det = cofactor_det(&m);
        assert_relative_eq!(logdet_spd(&m, 0.0).unwrap(), det.ln(), max_relative = 1e-10);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(
            spd_inverse(&Matrix::identity(4), 0.0).unwrap(),
            Matrix::identity(4)
        );
        let inv = spd_inverse(&Matrix::from_diag(&[2.0, 4.0]), 0.0).unwrap();
        assert!(inv.max_abs_diff(&Matrix::from_diag(&[0.5, 0.25])) < 1e-15);
    }

    #[test]
    fn inverse_multiplies_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_spd(&mut rng, 5);
        let inv = spd_inverse(&m, 0.0).unwrap();
        let prod = m.matmul(&inv).unwrap();
        assert!(prod.max_abs_diff(&Matrix::identity(5)) < 1e-8);
        assert!(inv.max_asymmetry() < 1e-10);
    }

    #[test]
    fn solve_matches_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_spd(&mut rng, 4);
        let f = CholeskyFactor::new(&m, 0.0).unwrap();
        let b = vec![1.0, -2.0, 0.5, 3.0];
        let x = f.solve(&b).unwrap();
        let back = m.matvec(&x).unwrap();
        for (u, v) in back.iter().zip(&b) {
            assert_relative_eq!(u, v, epsilon = 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn logdet_equals_brute_force(seed in any::<u64>(), n in 1usize..=8) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let m = random_spd(&mut rng, n);
                let det = cofactor_det(&m);
                let got = logdet_spd(&m, 0.0).unwrap().exp();
                prop_assert!(((got - det) / det).abs() < 1e-9);
            }

            #[test]
            fn cholesky_reconstructs(seed in any::<u64>(), n in 1usize..=8, jitter in 0.0f64..0.1) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let m = random_spd(&mut rng, n);
                let l = cholesky(&m, jitter).unwrap();
                let mut target = m.clone();
                target.add_diagonal(jitter);
                let rec = l.matmul_bt(&l).unwrap();
                let rel = rec.sub(&target).unwrap().frobenius_norm() / target.frobenius_norm();
                prop_assert!(rel < 1e-9);
                for i in 0..n {
                    prop_assert!(l[(i, i)] > 0.0);
                    for j in i + 1..n {
                        prop_assert_eq!(l[(i, j)], 0.0);
                    }
                }
            }

            #[test]
            fn inverse_round_trip(seed in any::<u64>(), n in 1usize..=8) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let m = random_spd(&mut rng, n);
                let inv = spd_inverse(&m, 0.0).unwrap();
                prop_assert!(m.matmul(&inv).unwrap().max_abs_diff(&Matrix::identity(n)) < 1e-8);
            }

            #[test]
            fn covariance_is_symmetric_psd(seed in any::<u64>(), n in 2usize..30, d in 1usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = random_matrix(&mut rng, n, d);
                let c = covariance_of_rows(&x).unwrap();
                prop_assert!(c.matrix.max_asymmetry() <= 1e-12);
                // PSD: xᵀ C x ≥ 0 on random directions
                for _ in 0..5 {
                    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let q: f64 = crate::numerics::dot(&v, &c.matrix.matvec(&v).unwrap());
                    prop_assert!(q >= -1e-10 * c.matrix.trace().max(1.0));
                }
            }
        }
    }
}
