//! Sample moments of column-sample matrices.

use super::Matrix;

/// Mean of the columns of a p×n matrix.
pub fn column_mean(x: &Matrix) -> Vec<f64> {
    let n = x.cols() as f64;
    (0..x.rows()).map(|i| x.row(i).iter().sum::<f64>() / n).collect()
}

/// `n⁻¹ Σ_t x_t x_tᵀ` over the columns of `x`, optionally after removing the column mean.
pub fn sample_covariance(x: &Matrix, center: bool) -> Matrix {
    let n = x.cols() as f64;
    let g = if center {
        let mean = column_mean(x);
        Matrix::from_fn(x.rows(), x.cols(), |i, t| x.get(i, t) - mean[i]).gram_rows()
    } else {
        x.gram_rows()
    };
    g.scale(1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn single_column_is_outer_product() {
        let x = Matrix::from_columns(&[[1.0, -2.0, 3.0]]);
        let s = sample_covariance(&x, false);
        assert_eq!(s, x.matmul(&x.transpose()).unwrap());
    }

    #[test]
    fn zero_data_gives_zero() {
        let s = sample_covariance(&Matrix::zeros(3, 5), true);
        assert_eq!(s, Matrix::zeros(3, 3));
    }

    #[test]
    fn centered_removes_constant_offset() {
        let x = Matrix::from_rows(&[[1.0, 1.0, 1.0], [2.0, 4.0, 6.0]]);
        let s = sample_covariance(&x, true);
        assert_eq!(s.get(0, 0), 0.0);
        assert!((s.get(1, 1) - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn converges_to_true_covariance() {
        let l = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.5, 2.0, 0.0], [-0.3, 0.2, 0.7]]);
        let sigma = l.matmul(&l.transpose()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let z = Matrix::from_fn(3, n, |_, _| StandardNormal.sample(&mut rng));
        let x = l.matmul(&z).unwrap();
        let s = sample_covariance(&x, false);
        let rel = s.sub(&sigma).unwrap().frobenius_norm() / sigma.frobenius_norm();
        assert!(rel <= 0.05, "{rel}");
    }

    #[test]
    fn column_permutation_invariant() {
        let x = Matrix::from_fn(4, 6, |i, j| ((i * 5 + j * 3) % 7) as f64 - 3.0);
        let perm = [3, 0, 5, 1, 4, 2];
        let y = x.select_cols(&perm);
        let a = sample_covariance(&x, true);
        let b = sample_covariance(&y, true);
        assert!(a.max_abs_diff(&b) < 1e-12);
    }
}
