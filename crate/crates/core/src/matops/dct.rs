//! Orthonormal DCT-II matrices.

use super::Matrix;
use std::f64::consts::PI;

/// Orthonormal DCT-II matrix `F` of size p×p; `F·x` transforms a column vector.
pub fn dct_matrix(p: usize) -> Matrix {
    assert!(p >= 1, "dct size must be positive");
    let pf = p as f64;
    Matrix::from_fn(p, p, |k, j| {
        let scale = if k == 0 { (1.0 / pf).sqrt() } else { (2.0 / pf).sqrt() };
        scale * (PI * (2.0 * j as f64 + 1.0) * k as f64 / (2.0 * pf)).cos()
    })
}

/// Separable 2-D DCT acting on the column-major vectorization of an `h×w` block.
///
/// For `vec(B)` stacking columns, `vec(F_h B F_wᵀ) = (F_w ⊗ F_h) vec(B)`.
pub fn dct2_block_matrix(h: usize, w: usize) -> Matrix {
    let fh = dct_matrix(h);
    let fw = dct_matrix(w);
    Matrix::from_fn(h * w, h * w, |r, c| {
        let (rc, rr) = (r / h, r % h);
        let (cc, cr) = (c / h, c % h);
        fw.get(rc, cc) * fh.get(rr, cr)
    })
}
