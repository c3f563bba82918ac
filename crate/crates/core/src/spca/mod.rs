//! Sparsity-aware PCA: the ℓ₁-regularized cost, its coordinate-descent solvers and post-fit tools.

mod bcd;
mod ecd;
pub mod io;
pub(crate) mod support;

pub use bcd::bcd_spca_fit;
pub use ecd::{ecd_spca_fit, ecd_spca_fit_observed, SweepState};
pub use support::{support_match, SupportMatch, DEFAULT_SUPPORT_DELTA};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{sample_covariance, sym_eig, thin_svd, Matrix};

/// Default coupling weight on `‖B − Cᵀ‖²`.
pub const DEFAULT_MU: f64 = 100.0;
/// Default stopping tolerance relative to the initial cost.
pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_SWEEPS: usize = 500;
/// Entries of `Ĉ` below this magnitude everywhere mean the fit collapsed to zero.
pub const ZERO_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Ecd,
    Bcd,
}

/// Solver settings for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpcaConfig {
    pub q: usize,
    /// One nonnegative penalty per reduced dimension.
    pub lambdas: Vec<f64>,
    pub mu: f64,
    /// Optional p×q entrywise penalty weights shared by `C(ρ, j)` and `B(j, ρ)`.
    pub weights: Option<Matrix>,
    /// Absolute stopping threshold on the per-sweep cost change; `None` uses
    /// [`DEFAULT_REL_TOL`] times the initial cost.
    pub tol: Option<f64>,
    pub max_sweeps: usize,
    pub solver: Solver,
}

impl SpcaConfig {
    /// A config with the same `lambda` on every row and all other fields at their defaults.
    pub fn new(q: usize, lambda: f64) -> Self {
        Self {
            q,
            lambdas: vec![lambda; q],
            mu: DEFAULT_MU,
            weights: None,
            tol: None,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            solver: Solver::Ecd,
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_weights(mut self, weights: Matrix) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn with_solver(mut self, solver: Solver) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_max_sweeps(mut self, max_sweeps: usize) -> Self {
        self.max_sweeps = max_sweeps;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = Some(tol);
        self
    }

    /// Checks the config against data dimension `p`.
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.q == 0 || self.q > p {
            return Err(Error::Config(format!("q = {} must lie in 1..={p}", self.q)));
        }
        if self.lambdas.len() != self.q {
            return Err(Error::Config(format!(
                "{} lambdas given for q = {}",
                self.lambdas.len(),
                self.q
            )));
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config("lambdas must be finite and nonnegative".into()));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::Config("mu must be finite and nonnegative".into()));
        }
        if self.mu == 0.0 && self.lambdas.iter().any(|&l| l > 0.0) {
            return Err(Error::Config("mu must be positive when any lambda is positive".into()));
        }
        if let Some(t) = self.tol {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config("tol must be positive".into()));
            }
        }
        if let Some(w) = &self.weights {
            if w.shape() != (p, self.q) {
                return Err(Error::ShapeMismatch(format!(
                    "weights are {}x{}, expected {p}x{}",
                    w.rows(),
                    w.cols(),
                    self.q
                )));
            }
            if w.data().iter().any(|&v| v < 0.0) {
                return Err(Error::Config("weights must be nonnegative".into()));
            }
        }
        Ok(())
    }

    /// Penalty on entry `(j, ρ)` of `B` (and `(ρ, j)` of `C`).
    #[inline]
    pub(crate) fn penalty(&self, j: usize, rho: usize) -> f64 {
        let w = self.weights.as_ref().map_or(1.0, |w| w.get(j, rho));
        self.lambdas[rho] * w
    }
}

/// A fitted pair `(B̂, Ĉ)` with its orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpcaModel {
    pub b: Matrix,
    pub c: Matrix,
    /// Orthonormal p×q basis of `range(Ĉᵀ)`; `None` when `Ĉ` collapsed to zero.
    pub basis: Option<Matrix>,
    /// `cost_trace[0]` is the cost at the starting point, then one entry per sweep.
    pub cost_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Numerical rank of `Ĉ`; below `q` the trailing basis columns only complete the frame.
    pub rank: usize,
}

impl SpcaModel {
    pub(crate) fn from_fit(b: Matrix, c: Matrix, cost_trace: Vec<f64>, sweeps: usize, converged: bool) -> Result<Self> {
        let (basis, rank) = match orthonormalize_with_rank(&c) {
            Ok((u, rank)) => (Some(u), rank),
            Err(Error::ZeroMatrix) => (None, 0),
            Err(e) => return Err(e),
        };
        Ok(Self {
            b,
            c,
            basis,
            cost_trace,
            sweeps,
            converged,
            rank,
        })
    }

    pub fn q(&self) -> usize {
        self.c.rows()
    }

    pub fn p(&self) -> usize {
        self.c.cols()
    }

    pub fn final_cost(&self) -> f64 {
        *self.cost_trace.last().expect("cost trace is never empty")
    }
}

/// Closed-form minimizer of `‖χ − c·h‖² + μ(c − b̂)² + λ|c|` over scalar `c`,
/// given `inner = χᵀh` and `hnorm2 = ‖h‖²`.
pub fn scalar_lasso(inner: f64, hnorm2: f64, mu: f64, bhat: f64, lambda: f64) -> Result<f64> {
    let denom = hnorm2 + mu;
    if denom <= 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    let a = inner + mu * bhat;
    let mag = a.abs() / denom - lambda / (2.0 * denom);
    Ok(if mag > 0.0 { a.signum() * mag } else { 0.0 })
}

/// The regularized cost `n⁻¹‖X − BCX‖² + Σ λ_ρ w_{j,ρ}(|C(ρ,j)| + |B(j,ρ)|) + μ‖B − Cᵀ‖²`.
pub fn spca_cost(x: &Matrix, b: &Matrix, c: &Matrix, cfg: &SpcaConfig) -> Result<f64> {
    check_shapes(x.rows(), b, c)?;
    let n = x.cols() as f64;
    let resid = x.sub(&b.matmul(&c.matmul(x)?)?)?;
    Ok(resid.frobenius_norm_sq() / n + penalty_terms(b, c, cfg))
}

/// Same cost with the fit term written through `Σ̂ = XXᵀ/n`.
pub(crate) fn gram_cost(sigma: &Matrix, b: &Matrix, c: &Matrix, cfg: &SpcaConfig) -> Result<f64> {
    let p = sigma.rows();
    let bc = b.matmul(c)?;
    let a = Matrix::from_fn(p, p, |i, j| f64::from(i == j) - bc.get(i, j));
    let asig = a.matmul(sigma)?;
    let fit: f64 = asig.data().iter().zip(a.data()).map(|(x, y)| x * y).sum();
    Ok(fit.max(0.0) + penalty_terms(b, c, cfg))
}

pub(crate) fn penalty_terms(b: &Matrix, c: &Matrix, cfg: &SpcaConfig) -> f64 {
    let (p, q) = b.shape();
    let mut l1 = 0.0;
    let mut coupling = 0.0;
    for j in 0..p {
        for rho in 0..q {
            let (bv, cv) = (b.get(j, rho), c.get(rho, j));
            l1 += cfg.penalty(j, rho) * (bv.abs() + cv.abs());
            coupling += (bv - cv).powi(2);
        }
    }
    l1 + cfg.mu * coupling
}

pub(crate) fn check_shapes(p: usize, b: &Matrix, c: &Matrix) -> Result<()> {
    let q = c.rows();
    if b.shape() != (p, q) || c.cols() != p {
        return Err(Error::ShapeMismatch(format!(
            "B is {}x{}, C is {}x{}, data has {p} rows",
            b.rows(),
            b.cols(),
            c.rows(),
            c.cols()
        )));
    }
    Ok(())
}

/// Standard-PCA starting point `B = Cᵀ = Û_q` from the uncentered sample covariance.
///
/// All-zero data has no signal subspace, so the starting point is then `B = C = 0`.
pub fn pca_init(x: &Matrix, q: usize) -> Result<(Matrix, Matrix)> {
    let sigma = sample_covariance(x, false);
    pca_init_from_cov(&sigma, q)
}

pub(crate) fn pca_init_from_cov(sigma: &Matrix, q: usize) -> Result<(Matrix, Matrix)> {
    let p = sigma.rows();
    if sigma.max_abs() == 0.0 {
        return Ok((Matrix::zeros(p, q), Matrix::zeros(q, p)));
    }
    let u = sym_eig(sigma)?.leading(q);
    let c = u.transpose();
    Ok((u, c))
}

/// Top-q eigenvectors of the uncentered sample covariance.
pub fn pca_basis(x: &Matrix, q: usize) -> Result<Matrix> {
    Ok(sym_eig(&sample_covariance(x, false))?.leading(q))
}

/// Entrywise weights `max(|u|, floor)^(−γ)`.
pub fn adaptive_weights(u_pca: &Matrix, gamma: f64, floor: f64) -> Matrix {
    u_pca.map(|v| v.abs().max(floor).powf(-gamma))
}

/// Orthonormal basis of `range(cᵀ)`, columns ordered by singular value.
pub fn orthonormalize(c: &Matrix) -> Result<Matrix> {
    orthonormalize_with_rank(c).map(|(u, _)| u)
}

fn orthonormalize_with_rank(c: &Matrix) -> Result<(Matrix, usize)> {
    if c.max_abs() < ZERO_THRESHOLD {
        return Err(Error::ZeroMatrix);
    }
    let svd = thin_svd(&c.transpose())?;
    let cutoff = svd.s[0] * 1e-10;
    let rank = svd.s.iter().filter(|&&s| s > cutoff).count();
    Ok((svd.u, rank))
}

/// Orthogonal projection of each column of `x` onto the fitted subspace.
pub fn reconstruct(model: &SpcaModel, x: &Matrix) -> Result<Matrix> {
    if x.rows() != model.p() {
        return Err(Error::ShapeMismatch(format!(
            "data has {} rows, model expects {}",
            x.rows(),
            model.p()
        )));
    }
    match &model.basis {
        Some(u) => u.matmul(&u.t_matmul(x)?),
        None => Ok(Matrix::zeros(x.rows(), x.cols())),
    }
}

/// Fits with the solver selected in `cfg`.
pub fn fit(x: &Matrix, cfg: &SpcaConfig, init: Option<(Matrix, Matrix)>) -> Result<SpcaModel> {
    match cfg.solver {
        Solver::Ecd => ecd_spca_fit(x, cfg, init),
        Solver::Bcd => bcd_spca_fit(x, cfg, init),
    }
}

pub(crate) fn stop_threshold(cfg: &SpcaConfig, initial_cost: f64) -> f64 {
    cfg.tol
        .unwrap_or((DEFAULT_REL_TOL * initial_cost).max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::pinv;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Minimizes the scalar objective by grid search then golden-section refinement.
    fn brute_scalar(inner: f64, h2: f64, mu: f64, bhat: f64, lambda: f64) -> f64 {
        let f = |c: f64| h2 * c * c - 2.0 * inner * c + mu * (c - bhat).powi(2) + lambda * c.abs();
        let center = (inner + mu * bhat) / (h2 + mu);
        let half = center.abs() * 2.0 + 1.0;
        let steps = 4000;
        let mut best = 0.0;
        let mut best_val = f(0.0);
        for k in 0..=steps {
            let c = center - half + 2.0 * half * k as f64 / steps as f64;
            if f(c) < best_val {
                best_val = f(c);
                best = c;
            }
        }
        let h = 2.0 * half / steps as f64;
        let (mut lo, mut hi) = (best - h, best + h);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if f(a) < f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let c = 0.5 * (lo + hi);
        if f(0.0) <= f(c) {
            0.0
        } else {
            c
        }
    }

    #[test]
    fn scalar_lasso_formula_value() {
        assert_eq!(scalar_lasso(1.0, 1.0, 1.0, 1.0, 2.0).unwrap(), 0.5);
    }

    #[test]
    fn scalar_lasso_unregularized_limit() {
        assert_eq!(scalar_lasso(2.0, 4.0, 0.0, 0.0, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn scalar_lasso_threshold_boundary() {
        assert_eq!(scalar_lasso(1.0, 1.0, 0.0, 0.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn scalar_lasso_degenerate() {
        assert!(matches!(
            scalar_lasso(1.0, 0.0, 0.0, 0.0, 1.0),
            Err(Error::DegenerateDenominator)
        ));
    }

    #[test]
    fn scalar_lasso_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let log_uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| 10f64.powf(rng.random_range(lo..hi));
        for _ in 0..200 {
            let inner = log_uniform(&mut rng, -2.0, 1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let h2 = log_uniform(&mut rng, -2.0, 1.0);
            let mu = log_uniform(&mut rng, -2.0, 1.0);
            let bhat = rng.random_range(-1.0..1.0);
            let lambda = log_uniform(&mut rng, -3.0, 1.0);
            let c = scalar_lasso(inner, h2, mu, bhat, lambda).unwrap();
            let bf = brute_scalar(inner, h2, mu, bhat, lambda);
            assert!((c - bf).abs() <= 1e-6, "{c} vs {bf}");
        }
    }

    #[test]
    fn cost_of_zero_matrices_is_data_energy() {
        let x = random(4, 6, 1);
        let cfg = SpcaConfig::new(2, 0.0).with_mu(0.0);
        let cost = spca_cost(&x, &Matrix::zeros(4, 2), &Matrix::zeros(2, 4), &cfg).unwrap();
        assert!((cost - x.frobenius_norm_sq() / 6.0).abs() < 1e-14);
    }

    #[test]
    fn cost_vanishes_at_clairvoyant_solution() {
        let u = thin_svd(&random(5, 2, 2)).unwrap().u;
        let x = u.matmul(&random(2, 9, 3)).unwrap();
        let cfg = SpcaConfig::new(2, 0.0);
        let cost = spca_cost(&x, &u, &u.transpose(), &cfg).unwrap();
        assert!(cost.abs() < 1e-20);
    }

    #[test]
    fn cost_matches_term_by_term_evaluation() {
        let (p, q, n) = (5, 2, 7);
        let x = random(p, n, 4);
        let b = random(p, q, 5);
        let c = random(q, p, 6);
        let w = random(p, q, 7).map(f64::abs);
        let cfg = SpcaConfig {
            lambdas: vec![0.3, 0.7],
            ..SpcaConfig::new(q, 0.0).with_mu(2.5).with_weights(w.clone())
        };
        let mut fit = 0.0;
        for t in 0..n {
            for i in 0..p {
                let mut recon = 0.0;
                for rho in 0..q {
                    for j in 0..p {
                        recon += b.get(i, rho) * c.get(rho, j) * x.get(j, t);
                    }
                }
                fit += (x.get(i, t) - recon).powi(2);
            }
        }
        let mut pen = 0.0;
        let mut coup = 0.0;
        for rho in 0..q {
            for j in 0..p {
                pen += cfg.lambdas[rho] * w.get(j, rho) * (c.get(rho, j).abs() + b.get(j, rho).abs());
                coup += (b.get(j, rho) - c.get(rho, j)).powi(2);
            }
        }
        let expected = fit / n as f64 + pen + 2.5 * coup;
        let got = spca_cost(&x, &b, &c, &cfg).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected.abs());
        let sigma = sample_covariance(&x, false);
        let gram = gram_cost(&sigma, &b, &c, &cfg).unwrap();
        assert!((gram - expected).abs() <= 1e-10 * expected.abs());
    }

    #[test]
    fn cost_rejects_bad_shapes() {
        let cfg = SpcaConfig::new(2, 0.0);
        assert!(spca_cost(&Matrix::zeros(3, 4), &Matrix::zeros(3, 2), &Matrix::zeros(2, 4), &cfg).is_err());
    }

    #[test]
    fn adaptive_weight_examples() {
        let u = Matrix::from_rows(&[[1.0, 0.0, 0.25]]);
        let w1 = adaptive_weights(&u, 1.0, 1e-8);
        assert_eq!(w1.get(0, 0), 1.0);
        assert!((w1.get(0, 1) - 1e8).abs() < 1e-4);
        assert_eq!(adaptive_weights(&u, 2.0, 1e-8).get(0, 2), 16.0);
    }

    #[test]
    fn orthonormalize_orthonormal_rows_spans_same_subspace() {
        let u = thin_svd(&random(6, 2, 8)).unwrap().u;
        let basis = orthonormalize(&u.transpose()).unwrap();
        let proj_a = basis.matmul(&basis.transpose()).unwrap();
        let proj_b = u.matmul(&u.transpose()).unwrap();
        assert!(proj_a.max_abs_diff(&proj_b) < 1e-10);
    }

    #[test]
    fn orthonormalize_rank_deficient_completes_frame() {
        let row = [1.0, 2.0, 0.0, -1.0];
        let c = Matrix::from_rows(&[row, row]);
        let (u, rank) = orthonormalize_with_rank(&c).unwrap();
        assert_eq!(rank, 1);
        assert!(u.t_matmul(&u).unwrap().max_abs_diff(&Matrix::identity(2)) < 1e-10);
        let nrm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d: f64 = u.col(0).iter().zip(row).map(|(a, b)| a * b / nrm).sum();
        assert!((d.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthonormalize_projector_matches_range() {
        let c = random(3, 10, 9);
        let u = orthonormalize(&c).unwrap();
        let ct = c.transpose();
        let proj = ct.matmul(&pinv(&ct, 1e-12).unwrap()).unwrap();
        assert!(u.matmul(&u.transpose()).unwrap().max_abs_diff(&proj) <= 1e-8);
    }

    #[test]
    fn orthonormalize_zero_is_error() {
        assert!(matches!(orthonormalize(&Matrix::zeros(2, 5)), Err(Error::ZeroMatrix)));
    }

    fn model_with_c(c: Matrix) -> SpcaModel {
        let b = c.transpose();
        SpcaModel::from_fit(b, c, vec![0.0], 0, true).unwrap()
    }

    #[test]
    fn reconstruct_projects() {
        let c = random(2, 6, 10);
        let model = model_with_c(c.clone());
        let u = model.basis.clone().unwrap();
        let inside = u.matmul(&random(2, 3, 11)).unwrap();
        assert!(reconstruct(&model, &inside).unwrap().max_abs_diff(&inside) < 1e-10);

        let x = random(6, 4, 12);
        let via_basis = reconstruct(&model, &x).unwrap();
        let ctc = c.t_matmul(&c).unwrap();
        let recon = pinv(&ctc, 1e-12).unwrap().matmul(&c.transpose()).unwrap();
        let via_pinv = recon.matmul(&c.matmul(&x).unwrap()).unwrap();
        assert!(via_basis.max_abs_diff(&via_pinv) <= 1e-8);

        let ortho = x.sub(&via_basis).unwrap();
        assert!(reconstruct(&model, &ortho).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn collapsed_model_reconstructs_zero() {
        let model = model_with_c(Matrix::zeros(2, 4));
        assert!(model.basis.is_none());
        assert_eq!(model.rank, 0);
        let x = random(4, 3, 13);
        assert_eq!(reconstruct(&model, &x).unwrap(), Matrix::zeros(4, 3));
    }

    #[test]
    fn config_validation() {
        assert!(SpcaConfig::new(0, 0.1).validate(4).is_err());
        assert!(SpcaConfig::new(5, 0.1).validate(4).is_err());
        assert!(SpcaConfig::new(2, 0.1).with_mu(0.0).validate(4).is_err());
        assert!(SpcaConfig::new(2, 0.0).with_mu(0.0).validate(4).is_ok());
        assert!(SpcaConfig::new(2, -1.0).validate(4).is_err());
        assert!(SpcaConfig::new(2, 0.1).with_weights(Matrix::zeros(3, 2)).validate(4).is_err());
    }
}
