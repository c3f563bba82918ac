//! Block coordinate descent: alternate exact minimization over `C` and over `B`.

use super::{check_shapes, gram_cost, pca_init_from_cov, scalar_lasso, stop_threshold, SpcaConfig, SpcaModel};
use crate::error::{Error, Result};
use crate::matops::{sample_covariance, Matrix};

const INNER_TOL: f64 = 1e-10;
const INNER_CAP: usize = 500;

/// BCD fit working entirely through `Σ̂ = XXᵀ/n`.
///
/// The C-step minimizes the cost over all of `C` by cyclic coordinate descent
/// run to a relative cost change of 1e-10; the B-step solves the p independent
/// row-wise lasso problems.
pub fn bcd_spca_fit(x: &Matrix, cfg: &SpcaConfig, init: Option<(Matrix, Matrix)>) -> Result<SpcaModel> {
    let p = x.rows();
    cfg.validate(p)?;
    let sigma = sample_covariance(x, false);
    let (mut b, mut c) = match init {
        Some(bc) => bc,
        None => pca_init_from_cov(&sigma, cfg.q)?,
    };
    check_shapes(p, &b, &c)?;

    let mut cost = gram_cost(&sigma, &b, &c, cfg)?;
    let eps = stop_threshold(cfg, cost);
    let mut trace = vec![cost];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        c_step(&sigma, &b, &mut c, cfg)?;
        b_step(&sigma, &mut b, &c, cfg)?;
        let next = gram_cost(&sigma, &b, &c, cfg)?;
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("cost diverged at iteration {sweeps}")));
        }
        trace.push(next);
        let change = cost - next;
        cost = next;
        if change < eps {
            converged = true;
            break;
        }
    }
    SpcaModel::from_fit(b, c, trace, sweeps, converged)
}

fn c_step(sigma: &Matrix, b: &Matrix, c: &mut Matrix, cfg: &SpcaConfig) -> Result<()> {
    let (p, q) = b.shape();
    let mu = cfg.mu;
    let bt_sigma = b.t_matmul(sigma)?;
    let m = b.t_matmul(b)?;
    let mut c_sigma = c.matmul(sigma)?;
    let mut prev = gram_cost(sigma, b, c, cfg)?;
    for _ in 0..INNER_CAP {
        for j in 0..p {
            let sjj = sigma.get(j, j);
            for rho in 0..q {
                let h2 = m.get(rho, rho) * sjj;
                if h2 + mu == 0.0 {
                    continue;
                }
                let old = c.get(rho, j);
                let coupled: f64 = (0..q).map(|k| m.get(rho, k) * c_sigma.get(k, j)).sum();
                let inner = bt_sigma.get(rho, j) - coupled + old * h2;
                let new = scalar_lasso(inner, h2, mu, b.get(j, rho), cfg.penalty(j, rho))?;
                let delta = new - old;
                if delta != 0.0 {
                    c.set(rho, j, new);
                    for (cs, s) in c_sigma.row_mut(rho).iter_mut().zip(sigma.row(j)) {
                        *cs += delta * s;
                    }
                }
            }
        }
        let next = gram_cost(sigma, b, c, cfg)?;
        let done = (prev - next).abs() <= INNER_TOL * prev.abs().max(f64::MIN_POSITIVE);
        prev = next;
        if done {
            break;
        }
    }
    Ok(())
}

fn b_step(sigma: &Matrix, b: &mut Matrix, c: &Matrix, cfg: &SpcaConfig) -> Result<()> {
    let (p, q) = b.shape();
    let mu = cfg.mu;
    let sigma_ct = sigma.matmul(&c.transpose())?;
    let k = c.matmul(&sigma_ct)?;
    for j in 0..p {
        let v = sigma_ct.row(j);
        for _ in 0..INNER_CAP {
            let mut biggest = 0.0f64;
            let mut scale = 0.0f64;
            for rho in 0..q {
                let h2 = k.get(rho, rho);
                if h2 + mu == 0.0 {
                    continue;
                }
                let old = b.get(j, rho);
                let others: f64 = (0..q).filter(|&t| t != rho).map(|t| k.get(rho, t) * b.get(j, t)).sum();
                let inner = v[rho] - others;
                let new = scalar_lasso(inner, h2, mu, c.get(rho, j), cfg.penalty(j, rho))?;
                b.set(j, rho, new);
                biggest = biggest.max((new - old).abs());
                scale = scale.max(new.abs());
            }
            if biggest <= 1e-13 * scale.max(1e-300) || biggest == 0.0 {
                break;
            }
        }
    }
    Ok(())
}
