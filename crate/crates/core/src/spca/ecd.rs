//! Element-wise coordinate descent with an incrementally maintained residual.

use super::{check_shapes, pca_init, penalty_terms, scalar_lasso, stop_threshold, SpcaConfig, SpcaModel};
use crate::error::{Error, Result};
use crate::matops::{dot, Matrix};

/// Solver state exposed to observers after every sweep.
pub struct SweepState<'a> {
    pub sweep: usize,
    pub b: &'a Matrix,
    pub c: &'a Matrix,
    /// The maintained residual `X − B·C·X`.
    pub residual: &'a Matrix,
    pub cost: f64,
}

pub fn ecd_spca_fit(x: &Matrix, cfg: &SpcaConfig, init: Option<(Matrix, Matrix)>) -> Result<SpcaModel> {
    ecd_spca_fit_observed(x, cfg, init, |_| {})
}

/// ECD fit that reports the state after every sweep (sweep 0 is the starting point).
///
/// Each sweep updates every `C(ρ, j)` (j outer, ρ inner) and then every `B(j, ρ)`,
/// each by the exact scalar minimizer of the cost with all other entries fixed.
pub fn ecd_spca_fit_observed(
    x: &Matrix,
    cfg: &SpcaConfig,
    init: Option<(Matrix, Matrix)>,
    mut observer: impl FnMut(&SweepState),
) -> Result<SpcaModel> {
    let (p, n) = x.shape();
    cfg.validate(p)?;
    let q = cfg.q;
    let (mut b, mut c) = match init {
        Some(bc) => bc,
        None => pca_init(x, q)?,
    };
    check_shapes(p, &b, &c)?;
    let nf = n as f64;
    let mu = cfg.mu;

    let mut z = c.matmul(x)?;
    let mut r = x.sub(&b.matmul(&z)?)?;
    let xnorm2: Vec<f64> = (0..p).map(|j| dot(x.row(j), x.row(j))).collect();

    let cost_of = |r: &Matrix, b: &Matrix, c: &Matrix| r.frobenius_norm_sq() / nf + penalty_terms(b, c, cfg);
    let mut cost = cost_of(&r, &b, &c);
    let eps = stop_threshold(cfg, cost);
    let mut trace = vec![cost];
    observer(&SweepState {
        sweep: 0,
        b: &b,
        c: &c,
        residual: &r,
        cost,
    });

    let mut converged = false;
    let mut sweeps = 0;
    let mut rx = vec![0.0; p];
    let mut deltas = vec![0.0; q];
    let mut rz = vec![0.0; q];
    while sweeps < cfg.max_sweeps {
        sweeps += 1;

        // C-phase: h = B_ρ X_j, so ⟨R, h⟩ = B_ρ · (R X_jᵀ)
        let bnorm2: Vec<f64> = (0..q).map(|rho| (0..p).map(|i| b.get(i, rho).powi(2)).sum()).collect();
        for j in 0..p {
            if xnorm2[j] == 0.0 && mu == 0.0 {
                continue;
            }
            let xj = x.row(j);
            for (i, v) in rx.iter_mut().enumerate() {
                *v = dot(r.row(i), xj);
            }
            let mut any = false;
            for rho in 0..q {
                let h2 = bnorm2[rho] * xnorm2[j];
                let old = c.get(rho, j);
                deltas[rho] = 0.0;
                if h2 + mu == 0.0 {
                    continue;
                }
                let bcol_dot: f64 = (0..p).map(|i| b.get(i, rho) * rx[i]).sum();
                let inner = bcol_dot + old * h2;
                let new = scalar_lasso(inner / nf, h2 / nf, mu, b.get(j, rho), cfg.penalty(j, rho))?;
                let delta = new - old;
                if delta != 0.0 {
                    c.set(rho, j, new);
                    deltas[rho] = delta;
                    any = true;
                    for (i, v) in rx.iter_mut().enumerate() {
                        *v -= delta * b.get(i, rho) * xnorm2[j];
                    }
                }
            }
            if any {
                for i in 0..p {
                    let coef: f64 = (0..q).map(|rho| b.get(i, rho) * deltas[rho]).sum();
                    if coef != 0.0 {
                        for (rv, xv) in r.row_mut(i).iter_mut().zip(xj) {
                            *rv -= coef * xv;
                        }
                    }
                }
                for rho in 0..q {
                    if deltas[rho] != 0.0 {
                        let d = deltas[rho];
                        for (zv, xv) in z.row_mut(rho).iter_mut().zip(xj) {
                            *zv += d * xv;
                        }
                    }
                }
            }
        }

        // B-phase: h = Z_ρ, touching only row j of the residual
        let zz = z.gram_rows();
        for j in 0..p {
            for (k, v) in rz.iter_mut().enumerate() {
                *v = dot(r.row(j), z.row(k));
            }
            let mut any = false;
            for rho in 0..q {
                let h2 = zz.get(rho, rho);
                let old = b.get(j, rho);
                deltas[rho] = 0.0;
                if h2 + mu == 0.0 {
                    continue;
                }
                let inner = rz[rho] + old * h2;
                let new = scalar_lasso(inner / nf, h2 / nf, mu, c.get(rho, j), cfg.penalty(j, rho))?;
                let delta = new - old;
                if delta != 0.0 {
                    b.set(j, rho, new);
                    deltas[rho] = delta;
                    any = true;
                    for (k, v) in rz.iter_mut().enumerate() {
                        *v -= delta * zz.get(rho, k);
                    }
                }
            }
            if any {
                for rho in 0..q {
                    let d = deltas[rho];
                    if d != 0.0 {
                        let (zr, rr) = (z.row(rho).to_vec(), r.row_mut(j));
                        for (rv, zv) in rr.iter_mut().zip(&zr) {
                            *rv -= d * zv;
                        }
                    }
                }
            }
        }

        let next = cost_of(&r, &b, &c);
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("cost diverged at sweep {sweeps}")));
        }
        trace.push(next);
        observer(&SweepState {
            sweep: sweeps,
            b: &b,
            c: &c,
            residual: &r,
            cost: next,
        });
        let change = (cost - next).abs();
        cost = next;
        if change < eps {
            converged = true;
            break;
        }
    }
    SpcaModel::from_fit(b, c, trace, sweeps, converged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::{sample_covariance, sym_eig};
    use crate::spca::spca_cost;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn zero_data_gives_zero_fit() {
        let x = Matrix::zeros(4, 10);
        let model = ecd_spca_fit(&x, &SpcaConfig::new(2, 0.1), None).unwrap();
        assert_eq!(model.b, Matrix::zeros(4, 2));
        assert_eq!(model.c, Matrix::zeros(2, 4));
        assert!(model.basis.is_none());
    }

    #[test]
    fn zero_data_from_nonzero_start_shrinks_to_zero() {
        let x = Matrix::zeros(3, 5);
        let init = (Matrix::identity(3).leading_cols(1), Matrix::identity(3).leading_cols(1).transpose());
        let cfg = SpcaConfig::new(1, 5.0).with_mu(1.0);
        let model = ecd_spca_fit(&x, &cfg, Some(init)).unwrap();
        assert_eq!(model.c.max_abs(), 0.0);
        assert_eq!(model.b.max_abs(), 0.0);
    }

    #[test]
    fn unregularized_q1_aligns_with_principal_eigenvector() {
        let mix = Matrix::from_rows(&[[2.0, 0.3], [0.3, 0.7]]);
        let x = mix.matmul(&gaussian(2, 16, 5)).unwrap();
        let start = (Matrix::from_rows(&[[0.6], [0.8]]), Matrix::from_rows(&[[0.6, 0.8]]));
        let model = ecd_spca_fit(&x, &SpcaConfig::new(1, 0.0), Some(start)).unwrap();
        let u = sym_eig(&sample_covariance(&x, false)).unwrap().leading(1);
        let c = model.c.row(0);
        let cos = dot(c, &u.col(0)) / dot(c, c).sqrt();
        assert!(cos.abs() >= 0.999, "{cos}");
    }

    #[test]
    fn trace_is_monotone_and_residual_stays_exact() {
        let x = gaussian(8, 30, 9);
        let cfg = SpcaConfig::new(3, 0.05).with_mu(10.0);
        let mut worst = 0.0f64;
        let model = ecd_spca_fit_observed(&x, &cfg, None, |s| {
            let fresh = x.sub(&s.b.matmul(&s.c.matmul(&x).unwrap()).unwrap()).unwrap();
            worst = worst.max(fresh.sub(s.residual).unwrap().frobenius_norm());
            let direct = spca_cost(&x, s.b, s.c, &cfg).unwrap();
            assert!((direct - s.cost).abs() <= 1e-9 * direct);
        })
        .unwrap();
        assert!(worst <= 1e-9 * x.frobenius_norm(), "{worst:e}");
        for w in model.cost_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * w[0].abs());
        }
        assert_eq!(model.cost_trace.len(), model.sweeps + 1);
    }

    #[test]
    fn large_lambda_collapses_both_factors() {
        let x = gaussian(5, 40, 3);
        let model = ecd_spca_fit(&x, &SpcaConfig::new(2, 1e3), None).unwrap();
        assert_eq!(model.b.max_abs(), 0.0);
        assert_eq!(model.c.max_abs(), 0.0);
    }

    #[test]
    fn rejects_bad_init_shapes() {
        let x = gaussian(4, 6, 1);
        let init = (Matrix::zeros(4, 1), Matrix::zeros(2, 4));
        assert!(ecd_spca_fit(&x, &SpcaConfig::new(2, 0.1), Some(init)).is_err());
    }
}
