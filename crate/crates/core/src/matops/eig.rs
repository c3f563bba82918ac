//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use super::Matrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const SYMMETRY_RTOL: f64 = 1e-12;

/// Eigenvalues in descending order with unit eigenvectors as matching columns.
#[derive(Debug, Clone)]
pub struct EigDecomp {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigDecomp {
    /// The eigenvectors of the `k` largest eigenvalues.
    pub fn leading(&self, k: usize) -> Matrix {
        self.vectors.leading_cols(k)
    }
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Each eigenvector is signed so that its largest-magnitude entry (first one on
/// ties) is positive.
pub fn sym_eig(a: &Matrix) -> Result<EigDecomp> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let asym = a.max_asymmetry();
    if asym > SYMMETRY_RTOL * a.max_abs() {
        return Err(Error::NotSymmetric(asym));
    }

    let n = a.rows();
    // symmetrized working copy
    let mut w = Matrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let mut v = Matrix::identity(n);

    let mut converged = false;
    for sweep in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| w.get(i, j).abs())
            .sum();
        if off == 0.0 {
            converged = true;
            break;
        }
        // small rotations are skipped during the first sweeps
        let threshold = if sweep < 3 {
            0.2 * off / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w.get(p, q);
                let app = w.get(p, p);
                let aqq = w.get(q, q);
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    w.set(p, q, 0.0);
                    w.set(q, p, 0.0);
                    continue;
                }
                if apq.abs() <= threshold || apq == 0.0 {
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut w, &mut v, p, q, c, s);
                w.set(p, q, 0.0);
                w.set(q, p, 0.0);
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence("jacobi eigensolver"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w.get(j, j).total_cmp(&w.get(i, i)));
    let values: Vec<f64> = order.iter().map(|&i| w.get(i, i)).collect();
    let mut vectors = v.select_cols(&order);
    for k in 0..n {
        fix_sign(&mut vectors, k);
    }
    Ok(EigDecomp { values, vectors })
}

fn rotate(w: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = w.rows();
    for k in 0..n {
        let wkp = w.get(k, p);
        let wkq = w.get(k, q);
        w.set(k, p, c * wkp - s * wkq);
        w.set(k, q, s * wkp + c * wkq);
    }
    for k in 0..n {
        let wpk = w.get(p, k);
        let wqk = w.get(q, k);
        w.set(p, k, c * wpk - s * wqk);
        w.set(q, k, s * wpk + c * wqk);
    }
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Flips column `k` so its largest-magnitude entry is positive.
pub(crate) fn fix_sign(m: &mut Matrix, k: usize) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for i in 0..m.rows() {
        let a = m.get(i, k).abs();
        if a > best_abs {
            best_abs = a;
            best = i;
        }
    }
    if m.get(best, k) < 0.0 {
        for i in 0..m.rows() {
            let x = m.get(i, k);
            m.set(i, k, -x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.random_range(-1.0..1.0);
                m.set(i, j, x);
                m.set(j, i, x);
            }
        }
        m
    }

    fn residual_ok(a: &Matrix, e: &EigDecomp, tol: f64) {
        let scale = a.frobenius_norm();
        for k in 0..a.rows() {
            let v = e.vectors.col(k);
            let av = a.mul_vec(&v).unwrap();
            let r: f64 = av
                .iter()
                .zip(&v)
                .map(|(x, y)| (x - e.values[k] * y).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(r <= tol * scale, "pair {k}: residual {r:e}");
        }
        let vtv = e.vectors.t_matmul(&e.vectors).unwrap();
        assert!(vtv.max_abs_diff(&Matrix::identity(a.rows())) <= 1e-10);
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let a = Matrix::identity(3);
        let e = sym_eig(&a).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        residual_ok(&a, &e, 1e-12);
    }

    #[test]
    fn diagonal_case_sorted_with_unit_vectors() {
        let a = Matrix::diag(&[1.0, 3.0]);
        let e = sym_eig(&a).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vectors, Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]));
        let a = Matrix::diag(&[3.0, 1.0]);
        let e = sym_eig(&a).unwrap();
        assert_eq!(e.vectors, Matrix::identity(2));
    }

    #[test]
    fn random_8x8_seed7_residuals() {
        let a = random_symmetric(8, 7);
        let e = sym_eig(&a).unwrap();
        residual_ok(&a, &e, 1e-9);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn sign_convention_makes_largest_entry_positive() {
        let a = random_symmetric(6, 11);
        let e = sym_eig(&a).unwrap();
        for k in 0..6 {
            let col = e.vectors.col(k);
            let top = col
                .iter()
                .cloned()
                .max_by(|x, y| x.abs().total_cmp(&y.abs()))
                .unwrap();
            assert!(top > 0.0);
        }
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        assert!(matches!(
            sym_eig(&Matrix::zeros(2, 3)),
            Err(Error::NonSquare { .. })
        ));
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.1, 1.0]]);
        assert!(matches!(sym_eig(&a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn zero_matrix_is_handled() {
        let e = sym_eig(&Matrix::zeros(4, 4)).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
        assert_eq!(e.vectors, Matrix::identity(4));
    }

    #[test]
    fn repeated_eigenvalues_still_orthonormal() {
        // two-fold degenerate spectrum rotated by a dense orthogonal matrix
        let q = sym_eig(&random_symmetric(5, 3)).unwrap().vectors;
        let d = Matrix::diag(&[2.0, 2.0, 1.0, 1.0, -4.0]);
        let a = q.matmul(&d).unwrap().matmul(&q.transpose()).unwrap();
        let a = Matrix::from_fn(5, 5, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
        let e = sym_eig(&a).unwrap();
        residual_ok(&a, &e, 1e-9);
        assert!((e.values[0] - 2.0).abs() < 1e-12);
        assert!((e.values[4] + 4.0).abs() < 1e-12);
    }
}
