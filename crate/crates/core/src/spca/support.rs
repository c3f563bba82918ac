//! Support comparison between an estimated `Ĉ` and a reference basis.

use crate::matops::{dot, norm_sq, Matrix};

/// Relative magnitude below which an entry counts as zero.
pub const DEFAULT_SUPPORT_DELTA: f64 = 1e-3;

/// Outcome of matching the rows of `Ĉ` to reference columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportMatch {
    /// True iff every row's thresholded support equals its partner's.
    pub matched: bool,
    /// Mean Jaccard similarity over rows.
    pub fraction: f64,
    /// `assignment[ρ]` is the reference column paired with row `ρ`.
    pub assignment: Vec<usize>,
}

/// Greedily pairs rows of `c` (q×p) with columns of `u_true` (p×r, r ≥ q) by largest
/// absolute cosine, then compares supports thresholded at `delta` times each vector's
/// largest magnitude.
pub fn support_match(c: &Matrix, u_true: &Matrix, delta: f64) -> SupportMatch {
    let assignment = greedy_assignment(c, u_true);
    let mut matched = true;
    let mut total = 0.0;
    for (rho, &k) in assignment.iter().enumerate() {
        let est = thresholded_support(c.row(rho), delta);
        let truth = thresholded_support(&u_true.col(k), delta);
        let inter = est.iter().zip(&truth).filter(|(a, b)| **a && **b).count();
        let union = est.iter().zip(&truth).filter(|(a, b)| **a || **b).count();
        total += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        matched &= est == truth;
    }
    SupportMatch {
        matched,
        fraction: total / assignment.len() as f64,
        assignment,
    }
}

/// Row-to-column pairing by repeatedly taking the largest remaining `|cos|`.
pub(crate) fn greedy_assignment(c: &Matrix, u_true: &Matrix) -> Vec<usize> {
    let (q, r) = (c.rows(), u_true.cols());
    assert!(r >= q, "reference has fewer columns than rows to match");
    assert_eq!(c.cols(), u_true.rows(), "dimension mismatch");
    let cols: Vec<Vec<f64>> = (0..r).map(|k| u_true.col(k)).collect();
    let mut scores = Vec::with_capacity(q * r);
    for rho in 0..q {
        let row = c.row(rho);
        let rn = norm_sq(row).sqrt();
        for (k, col) in cols.iter().enumerate() {
            let cn = norm_sq(col).sqrt();
            let cos = if rn == 0.0 || cn == 0.0 { 0.0 } else { (dot(row, col) / (rn * cn)).abs() };
            scores.push((cos, rho, k));
        }
    }
    // stable order on ties: lower row, then lower column
    scores.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assignment = vec![usize::MAX; q];
    let mut used = vec![false; r];
    for (_, rho, k) in scores {
        if assignment[rho] == usize::MAX && !used[k] {
            assignment[rho] = k;
            used[k] = true;
        }
    }
    assignment
}

fn thresholded_support(v: &[f64], delta: f64) -> Vec<bool> {
    let top = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.iter().map(|x| top > 0.0 && x.abs() > delta * top).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> Matrix {
        let s = 0.5f64.sqrt();
        Matrix::from_rows(&[
            [s, 0.0, 0.0],
            [s, 0.0, 0.0],
            [0.0, 0.6, 0.0],
            [0.0, 0.8, 0.0],
            [0.0, 0.0, 1.0],
        ])
    }

    #[test]
    fn exact_transpose_matches() {
        let u = reference();
        let m = support_match(&u.transpose(), &u, 1e-3);
        assert!(m.matched);
        assert_eq!(m.fraction, 1.0);
        assert_eq!(m.assignment, vec![0, 1, 2]);
    }

    #[test]
    fn zero_estimate_does_not_match() {
        let m = support_match(&Matrix::zeros(3, 5), &reference(), 1e-3);
        assert!(!m.matched);
        assert_eq!(m.fraction, 0.0);
    }

    #[test]
    fn invariant_to_permutation_sign_and_scale() {
        let u = reference();
        let ut = u.transpose();
        let c = Matrix::from_rows(&[
            ut.row(2).iter().map(|v| -3.0 * v).collect::<Vec<_>>(),
            ut.row(0).iter().map(|v| 0.2 * v).collect::<Vec<_>>(),
            ut.row(1).to_vec(),
        ]);
        let m = support_match(&c, &u, 1e-3);
        assert!(m.matched);
        assert_eq!(m.assignment, vec![2, 0, 1]);
    }

    #[test]
    fn partial_overlap_gives_jaccard() {
        let u = reference();
        let mut c = u.leading_cols(1).transpose();
        c.set(0, 2, 0.5);
        let m = support_match(&c, &u, 1e-3);
        assert!(!m.matched);
        assert!((m.fraction - 2.0 / 3.0).abs() < 1e-15);
    }
}
