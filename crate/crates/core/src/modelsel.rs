//! M-fold cross-validation over a grid of sparsity penalties.

use std::io::Write;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matops::Matrix;
use crate::rng::seeded;
use crate::spca::{adaptive_weights, fit, pca_basis, SpcaConfig};

/// Candidate penalties: one ladder shared by all rows, or a ladder per row (Cartesian product).
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    Shared(Vec<f64>),
    PerRow(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvGrid {
    pub lambdas: LambdaGrid,
    pub folds: usize,
    pub seed: u64,
    /// When set, adaptive weights `|Û|^(−γ)` are recomputed from each training split.
    pub adaptive_gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Penalty vector at each grid point, in evaluation order.
    pub points: Vec<Vec<f64>>,
    pub curve: Vec<f64>,
    pub stderr: Vec<f64>,
    pub best_index: usize,
    pub best: Vec<f64>,
    pub fold_assignment: Vec<usize>,
}

/// Weight floor used when adaptive weights are recomputed per fold.
pub const WEIGHT_FLOOR: f64 = 1e-8;

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && count >= 1);
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Assigns each of `n` samples to one of `m` folds; sizes differ by at most one.
pub fn kfold_partition(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m < 2 || m > n {
        return Err(Error::BadFoldCount { n, folds: m });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let mut fold = vec![0; n];
    for (pos, &t) in order.iter().enumerate() {
        fold[t] = pos % m;
    }
    Ok(fold)
}

impl LambdaGrid {
    /// Expands to penalty vectors of length `q`; the last row varies fastest.
    pub fn points(&self, q: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            LambdaGrid::Shared(values) => {
                check_ladder(values)?;
                Ok(values.iter().map(|&l| vec![l; q]).collect())
            }
            LambdaGrid::PerRow(ladders) => {
                if ladders.len() != q {
                    return Err(Error::Config(format!("{} ladders for q = {q}", ladders.len())));
                }
                for l in ladders {
                    check_ladder(l)?;
                }
                let mut points = vec![Vec::new()];
                for ladder in ladders {
                    points = points
                        .into_iter()
                        .flat_map(|prefix| {
                            ladder.iter().map(move |&l| {
                                let mut v = prefix.clone();
                                v.push(l);
                                v
                            })
                        })
                        .collect();
                }
                Ok(points)
            }
        }
    }
}

fn check_ladder(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if values.iter().any(|&v| !(v.is_finite() && v > 0.0)) || values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("grid values must be positive and strictly increasing".into()));
    }
    Ok(())
}

/// Per-sample validation errors `‖x_t − B̂₋ₘĈ₋ₘx_t‖²` for one penalty vector.
fn per_sample_errors(x: &Matrix, folds: &[usize], m: usize, lambdas: &[f64], cfg: &SpcaConfig, gamma: Option<f64>) -> Result<Vec<f64>> {
    let n = x.cols();
    let mut errors = vec![0.0; n];
    for fold in 0..m {
        let train: Vec<usize> = (0..n).filter(|&t| folds[t] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&t| folds[t] == fold).collect();
        let x_train = x.select_cols(&train);
        let x_test = x.select_cols(&test);
        let mut fold_cfg = cfg.clone();
        fold_cfg.lambdas = lambdas.to_vec();
        if let Some(g) = gamma {
            fold_cfg.weights = Some(adaptive_weights(&pca_basis(&x_train, cfg.q)?, g, WEIGHT_FLOOR));
        }
        let model = fit(&x_train, &fold_cfg, None)?;
        let recon = model.b.matmul(&model.c.matmul(&x_test)?)?;
        let resid = x_test.sub(&recon)?;
        for (k, &t) in test.iter().enumerate() {
            errors[t] = (0..resid.rows()).map(|i| resid.get(i, k).powi(2)).sum();
        }
    }
    Ok(errors)
}

/// Cross-validated reconstruction error at every grid point.
///
/// Ties in the minimum go to the later grid point (the sparser model for ascending ladders).
pub fn cv_select_lambda(x: &Matrix, grid: &CvGrid, template: &SpcaConfig) -> Result<CvResult> {
    let n = x.cols();
    template.validate(x.rows())?;
    let points = grid.lambdas.points(template.q)?;
    let folds = kfold_partition(n, grid.folds, grid.seed)?;
    let mut sizes = vec![0usize; grid.folds];
    for &f in &folds {
        sizes[f] += 1;
    }

    let mut curve = Vec::with_capacity(points.len());
    let mut stderr = Vec::with_capacity(points.len());
    for point in &points {
        let errors = per_sample_errors(x, &folds, grid.folds, point, template, grid.adaptive_gamma)?;
        let mut fold_mean = vec![0.0; grid.folds];
        for (t, e) in errors.iter().enumerate() {
            fold_mean[folds[t]] += e;
        }
        for (fm, &s) in fold_mean.iter_mut().zip(&sizes) {
            *fm /= s as f64;
        }
        let j: f64 = folds.iter().map(|&f| fold_mean[f]).sum::<f64>() / n as f64;
        let var = if n > 1 {
            folds.iter().map(|&f| (fold_mean[f] - j).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        curve.push(j);
        stderr.push((var / n as f64).sqrt());
    }
    let mut best_index = 0;
    for (k, &v) in curve.iter().enumerate() {
        if v <= curve[best_index] {
            best_index = k;
        }
    }
    Ok(CvResult {
        best: points[best_index].clone(),
        points,
        curve,
        stderr,
        best_index,
        fold_assignment: folds,
    })
}

/// Writes `lambda,jrec,stderr`; per-row grids join the penalty vector with `;`.
pub fn write_cv_csv<W: Write>(result: &CvResult, mut out: W) -> Result<()> {
    writeln!(out, "lambda,jrec,stderr")?;
    for ((point, j), s) in result.points.iter().zip(&result.curve).zip(&result.stderr) {
        let shared = point.iter().all(|&v| v == point[0]);
        let label = if shared {
            format!("{:?}", point[0])
        } else {
            point.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(";")
        };
        writeln!(out, "{label},{j:?},{s:?}")?;
    }
    Ok(())
}
