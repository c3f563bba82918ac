//! Thin SVD through the eigendecomposition of `aᵀa`, and the pseudoinverse built on it.

use super::eig::{fix_sign, sym_eig};
use super::matrix::{dot, norm_sq};
use super::Matrix;
use crate::error::{Error, Result};

/// `a = u · diag(s) · vᵀ` with `u` p×q, `v` q×q and `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

/// Thin SVD of a tall (or square) matrix.
///
/// Right singular vectors come from the Jacobi eigendecomposition of `aᵀa`;
/// singular values are recomputed as `‖a·v_k‖` and the left vectors as
/// `a·v_k / s_k`, then re-orthogonalized. Directions with numerically zero
/// singular value get left vectors from the orthogonal complement.
pub fn thin_svd(a: &Matrix) -> Result<Svd> {
    let (p, q) = a.shape();
    if p < q {
        return Err(Error::ShapeMismatch(format!(
            "thin_svd needs rows >= cols, got {p}x{q}"
        )));
    }
    let gram = a.t_matmul(a)?;
    let gram = Matrix::from_fn(q, q, |i, j| 0.5 * (gram.get(i, j) + gram.get(j, i)));
    let eig = sym_eig(&gram)?;

    let av = a.matmul(&eig.vectors)?;
    let mut s: Vec<f64> = (0..q).map(|k| norm_sq(&av.col(k)).sqrt()).collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    s = order.iter().map(|&k| s[k]).collect();
    let mut v = eig.vectors.select_cols(&order);
    let av = av.select_cols(&order);

    let s_max = s.first().copied().unwrap_or(0.0);
    let cutoff = s_max * 1e-13 * p as f64;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(q);
    let mut deficient = Vec::new();
    for k in 0..q {
        if s[k] > cutoff && s[k] > 0.0 {
            let col: Vec<f64> = av.col(k).iter().map(|x| x / s[k]).collect();
            u_cols.push(col);
        } else {
            u_cols.push(vec![0.0; p]);
            deficient.push(k);
        }
    }
    // two passes of modified Gram-Schmidt over the informative columns
    for _ in 0..2 {
        for k in 0..q {
            if deficient.contains(&k) {
                continue;
            }
            for prev in 0..k {
                if deficient.contains(&prev) {
                    continue;
                }
                let (head, tail) = u_cols.split_at_mut(k);
                let proj = dot(&head[prev], &tail[0]);
                for (x, y) in tail[0].iter_mut().zip(&head[prev]) {
                    *x -= proj * y;
                }
            }
            let nrm = norm_sq(&u_cols[k]).sqrt();
            u_cols[k].iter_mut().for_each(|x| *x /= nrm);
        }
    }
    for &k in &deficient {
        let basis: Vec<&Vec<f64>> = u_cols
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .map(|(_, c)| c)
            .collect();
        u_cols[k] = complement_vector(&basis, p);
    }
    let mut u = Matrix::from_columns(&u_cols);
    // make the factorization sign-deterministic: fix u, mirror on v
    for k in 0..q {
        let before = u.col(k);
        fix_sign(&mut u, k);
        if before != u.col(k) {
            for i in 0..q {
                let x = v.get(i, k);
                v.set(i, k, -x);
            }
        }
    }
    Ok(Svd { u, s, v })
}

/// A unit vector orthogonal to every (unit or zero) vector in `basis`.
fn complement_vector(basis: &[&Vec<f64>], p: usize) -> Vec<f64> {
    let mut best = vec![0.0; p];
    let mut best_norm = -1.0;
    for e in 0..p {
        let mut cand = vec![0.0; p];
        cand[e] = 1.0;
        for _ in 0..2 {
            for b in basis {
                if norm_sq(b) == 0.0 {
                    continue;
                }
                let proj = dot(b, &cand);
                for (x, y) in cand.iter_mut().zip(b.iter()) {
                    *x -= proj * y;
                }
            }
        }
        let nrm = norm_sq(&cand).sqrt();
        if nrm > best_norm {
            best_norm = nrm;
            best = cand.iter().map(|x| x / nrm).collect();
        }
        if nrm > 0.7 {
            break;
        }
    }
    best
}

/// Default relative cutoff used by [`pinv`]: `1e-12 · max(rows, cols)`.
pub fn default_pinv_tol(a: &Matrix) -> f64 {
    1e-12 * a.rows().max(a.cols()) as f64
}

/// Moore-Penrose pseudoinverse. Singular values at or below `tol · s_max` are treated as zero.
pub fn pinv(a: &Matrix, tol: f64) -> Result<Matrix> {
    if a.rows() < a.cols() {
        return Ok(pinv(&a.transpose(), tol)?.transpose());
    }
    let svd = thin_svd(a)?;
    let s_max = svd.s.first().copied().unwrap_or(0.0);
    let (p, q) = a.shape();
    let mut out = Matrix::zeros(q, p);
    for k in 0..q {
        let sk = svd.s[k];
        if s_max == 0.0 || sk <= tol * s_max {
            continue;
        }
        let inv = 1.0 / sk;
        for i in 0..q {
            let vik = svd.v.get(i, k) * inv;
            if vik == 0.0 {
                continue;
            }
            for j in 0..p {
                out[(i, j)] += vik * svd.u.get(j, k);
            }
        }
    }
    Ok(out)
}
