//! The synthetic-data experiments.

use crate::error::Result;
use crate::matops::Matrix;
use crate::modelsel::{cv_select_lambda, log_grid, CvGrid, LambdaGrid, WEIGHT_FLOOR};
use crate::rng::derive_seed;
use crate::satc::SatcCodec;
use crate::spca::{
    adaptive_weights, ecd_spca_fit_observed, fit, pca_basis, support_match, SpcaConfig, SpcaModel, Solver, DEFAULT_SUPPORT_DELTA,
};
use crate::synth::{gen_colored_noise, gen_sparse_basis, sample_gaussian, SynthModel};

use super::config::{ExperimentConfig, ExperimentKind};
use super::metrics::{est_mse_abs, genie_pca, j_rec_empirical, j_rec_projection, MetricsRow, Tally};
use super::{monte_carlo, worker_count};

/// Calibration draws use run indices from this offset on, disjoint from evaluation runs.
const CALIB_OFFSET: usize = 1 << 32;

type RunValues = Vec<(String, &'static str, f64)>;

#[derive(Debug, Clone, Copy)]
struct Point {
    value: f64,
    q: usize,
    n: usize,
    snr: Option<f64>,
    rate: Option<u32>,
}

struct Draw {
    model: SynthModel,
    x: Matrix,
    s_test: Matrix,
    x_test: Matrix,
}

pub(super) fn run_synthetic(cfg: &ExperimentConfig, emit: &mut dyn FnMut(&[MetricsRow]) -> Result<()>) -> Result<()> {
    if cfg.experiment == ExperimentKind::CvCurve {
        return run_cv_curve(cfg, emit);
    }
    let name = cfg.experiment.name();
    let threads = worker_count(cfg);
    for point in sweep_points(cfg) {
        let mut rows = Vec::new();
        let multiplier = if cfg.lambda_grid.is_empty() {
            1.0
        } else {
            let best = calibrate(cfg, point, threads)?;
            rows.push(MetricsRow {
                experiment: name.to_string(),
                sweep_value: point.value,
                method: "ecd".into(),
                metric: "lambda_multiplier".into(),
                value: best,
                stderr: 0.0,
                runs: cfg.calib_runs,
            });
            best
        };
        let runs = monte_carlo(cfg.mc_runs, threads, |run| evaluate(cfg, point, run, multiplier, false))?;
        let mut tally = Tally::default();
        for run in &runs {
            tally.extend(run);
        }
        rows.extend(tally.rows(name, point.value)?);
        emit(&rows)?;
    }
    Ok(())
}

fn sweep_points(cfg: &ExperimentConfig) -> Vec<Point> {
    let base = Point {
        value: 0.0,
        q: cfg.q[0],
        n: cfg.n_train[0],
        snr: cfg.snr_db.first().copied(),
        rate: cfg.rate_bits.first().copied(),
    };
    match cfg.experiment {
        ExperimentKind::MseVsQ => cfg.q.iter().map(|&q| Point { value: q as f64, q, ..base }).collect(),
        ExperimentKind::MseVsSnr => cfg
            .snr_db
            .iter()
            .map(|&s| Point {
                value: s,
                snr: Some(s),
                ..base
            })
            .collect(),
        ExperimentKind::EstmseVsN | ExperimentKind::SupportVsN => {
            cfg.n_train.iter().map(|&n| Point { value: n as f64, n, ..base }).collect()
        }
        ExperimentKind::RateDistortion => cfg
            .rate_bits
            .iter()
            .map(|&b| Point {
                value: f64::from(b),
                rate: Some(b),
                ..base
            })
            .collect(),
        ExperimentKind::CvCurve | ExperimentKind::ImagePipeline => Vec::new(),
    }
}

/// Picks the λ multiplier with the lowest mean S-PCA reconstruction error on calibration draws.
fn calibrate(cfg: &ExperimentConfig, point: Point, threads: usize) -> Result<f64> {
    let mut best = (f64::INFINITY, cfg.lambda_grid[0]);
    for &mult in &cfg.lambda_grid {
        let runs = monte_carlo(cfg.calib_runs, threads, |run| evaluate(cfg, point, CALIB_OFFSET + run, mult, true))?;
        let mut tally = Tally::default();
        for run in &runs {
            tally.extend(run);
        }
        let score = tally.mean("ecd", "jrec").unwrap_or(f64::INFINITY);
        if score < best.0 {
            best = (score, mult);
        }
    }
    Ok(best.1)
}

fn draw(cfg: &ExperimentConfig, point: Point, run: usize) -> Result<Draw> {
    let seed = derive_seed(cfg.seed, run as u64);
    let mut model = gen_sparse_basis(cfg.p, cfg.r, cfg.groups, cfg.zero_fraction, derive_seed(seed, 1))?;
    if let Some(snr) = point.snr {
        model = gen_colored_noise(&model, snr, derive_seed(seed, 2))?;
    }
    let noisy = point.snr.is_some();
    let (_, x) = sample_gaussian(&model, point.n, derive_seed(seed, 3), noisy)?;
    let (s_test, x_test) = sample_gaussian(&model, cfg.n_test, derive_seed(seed, 4), noisy)?;
    Ok(Draw { model, x, s_test, x_test })
}

fn spca_config(cfg: &ExperimentConfig, q: usize, n: usize, u_pca: &Matrix, multiplier: f64) -> SpcaConfig {
    let mut spca = SpcaConfig::new(q, cfg.lambda.lambda(n) * multiplier)
        .with_mu(cfg.mu)
        .with_max_sweeps(cfg.max_sweeps);
    if let Some(gamma) = cfg.lambda.gamma() {
        spca = spca.with_weights(adaptive_weights(u_pca, gamma, WEIGHT_FLOOR));
    }
    spca
}

/// Fits by ECD, also keeping `Ĉ` after each sweep count in `taus`.
fn fit_with_snapshots(x: &Matrix, spca: &SpcaConfig, taus: &[usize]) -> Result<(SpcaModel, Vec<Matrix>)> {
    let mut snapshots: Vec<Option<Matrix>> = vec![None; taus.len()];
    let model = ecd_spca_fit_observed(x, spca, None, |state| {
        for (slot, &tau) in snapshots.iter_mut().zip(taus) {
            if state.sweep == tau {
                *slot = Some(state.c.clone());
            }
        }
    })?;
    let snapshots = snapshots.into_iter().map(|s| s.unwrap_or_else(|| model.c.clone())).collect();
    Ok((model, snapshots))
}

fn evaluate(cfg: &ExperimentConfig, point: Point, run: usize, multiplier: f64, calibrating: bool) -> Result<RunValues> {
    let d = draw(cfg, point, run)?;
    let q = point.q;
    let u_true = d.model.leading(q);
    let u_pca = pca_basis(&d.x, q)?;
    let spca = spca_config(cfg, q, point.n, &u_pca, multiplier);
    let mut out: RunValues = Vec::new();
    let mut put = |method: &str, metric: &'static str, value: f64| out.push((method.to_string(), metric, value));

    match cfg.experiment {
        ExperimentKind::MseVsQ | ExperimentKind::MseVsSnr => {
            let ecd = fit(&d.x, &spca, None)?;
            put("ecd", "jrec", j_rec_empirical(&ecd.b, &ecd.c, &d.s_test, &d.x_test)?);
            if calibrating {
                return Ok(out);
            }
            if cfg.with_bcd {
                let bcd = fit(&d.x, &spca.clone().with_solver(Solver::Bcd), None)?;
                put("bcd", "jrec", j_rec_empirical(&bcd.b, &bcd.c, &d.s_test, &d.x_test)?);
            }
            put("pca", "jrec", j_rec_projection(&u_pca, &d.s_test, &d.x_test)?);
            put("genie", "jrec", j_rec_projection(&genie_pca(&u_pca, &u_true)?, &d.s_test, &d.x_test)?);
            put("clairvoyant", "jrec", j_rec_projection(&u_true, &d.s_test, &d.x_test)?);
        }
        ExperimentKind::EstmseVsN | ExperimentKind::SupportVsN => {
            let (ecd, snapshots) = fit_with_snapshots(&d.x, &spca, &cfg.taus)?;
            put("ecd", "jrec", j_rec_empirical(&ecd.b, &ecd.c, &d.s_test, &d.x_test)?);
            if calibrating {
                return Ok(out);
            }
            out.clear();
            let pca_c = u_pca.transpose();
            let mut estimates: Vec<(String, &Matrix, Option<&Matrix>)> = vec![("pca".into(), &pca_c, Some(&u_pca))];
            for (tau, c) in cfg.taus.iter().zip(&snapshots) {
                estimates.push((format!("ecd_tau{tau}"), c, None));
            }
            estimates.push(("ecd".into(), &ecd.c, None));
            for (method, c, basis) in estimates {
                if cfg.experiment == ExperimentKind::EstmseVsN {
                    out.push((method.clone(), "est_mse", est_mse_abs(c, &u_true)?));
                    let jrec = match basis {
                        Some(u) => j_rec_projection(u, &d.s_test, &d.x_test)?,
                        None if method == "ecd" => j_rec_empirical(&ecd.b, &ecd.c, &d.s_test, &d.x_test)?,
                        None => j_rec_empirical(&c.transpose(), c, &d.s_test, &d.x_test)?,
                    };
                    out.push((method, "jrec", jrec));
                } else {
                    let m = support_match(c, &u_true, DEFAULT_SUPPORT_DELTA);
                    out.push((method.clone(), "support_prob", if m.matched { 1.0 } else { 0.0 }));
                    out.push((method, "support_fraction", m.fraction));
                }
            }
        }
        ExperimentKind::RateDistortion => {
            let ecd = fit(&d.x, &spca, None)?;
            let rate = point.rate.expect("rate sweep point");
            let seed = derive_seed(derive_seed(cfg.seed, run as u64), 5);
            let mean = vec![0.0; cfg.p];
            let satc = SatcCodec::from_transform(&d.x, mean.clone(), ecd.c.clone(), Some(rate), seed)?;
            put("satc", "distortion", codec_distortion(&satc, &d.s_test, &d.x_test)?);
            if calibrating {
                return Ok(out);
            }
            let pca_tc = SatcCodec::from_transform(&d.x, mean.clone(), u_pca.transpose(), Some(rate), seed)?;
            put("pca_tc", "distortion", codec_distortion(&pca_tc, &d.s_test, &d.x_test)?);
            let satc_inf = SatcCodec::from_transform(&d.x, mean, ecd.c.clone(), None, seed)?;
            put("satc_unquantized", "distortion", codec_distortion(&satc_inf, &d.s_test, &d.x_test)?);
            put("clairvoyant_unquantized", "distortion", j_rec_projection(&u_true, &d.s_test, &d.x_test)?);
        }
        ExperimentKind::CvCurve | ExperimentKind::ImagePipeline => unreachable!("handled elsewhere"),
    }
    Ok(out)
}

/// Mean `‖s_t − decode(encode(x_t))‖²` over test columns.
fn codec_distortion(codec: &SatcCodec, s_test: &Matrix, x_test: &Matrix) -> Result<f64> {
    let mut total = 0.0;
    for t in 0..x_test.cols() {
        let recon = codec.roundtrip(&x_test.col(t))?;
        total += recon.iter().zip(s_test.col(t)).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(total / x_test.cols() as f64)
}

/// Per-sample held-out error of rank-q PCA under the given fold assignment.
fn pca_cv_error(x: &Matrix, folds: &[usize], m: usize, q: usize) -> Result<f64> {
    let n = x.cols();
    let mut total = 0.0;
    for fold in 0..m {
        let train: Vec<usize> = (0..n).filter(|&t| folds[t] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&t| folds[t] == fold).collect();
        let u = pca_basis(&x.select_cols(&train), q)?;
        let x_test = x.select_cols(&test);
        total += j_rec_projection(&u, &x_test, &x_test)? * test.len() as f64;
    }
    Ok(total / n as f64)
}

fn run_cv_curve(cfg: &ExperimentConfig, emit: &mut dyn FnMut(&[MetricsRow]) -> Result<()>) -> Result<()> {
    let name = cfg.experiment.name();
    let grid = log_grid(cfg.cv_lambda_min, cfg.cv_lambda_max, cfg.cv_points);
    let point = Point {
        value: 0.0,
        q: cfg.q[0],
        n: cfg.n_train[0],
        snr: cfg.snr_db.first().copied(),
        rate: None,
    };
    let runs = monte_carlo(cfg.mc_runs, worker_count(cfg), |run| {
        let d = draw(cfg, point, run)?;
        let template = SpcaConfig::new(point.q, 0.0)
            .with_mu(cfg.mu)
            .with_max_sweeps(cfg.max_sweeps);
        let cv = cv_select_lambda(
            &d.x,
            &CvGrid {
                lambdas: LambdaGrid::Shared(grid.clone()),
                folds: cfg.folds,
                seed: derive_seed(derive_seed(cfg.seed, run as u64), 6),
                adaptive_gamma: cfg.lambda.gamma(),
            },
            &template,
        )?;
        let pca = pca_cv_error(&d.x, &cv.fold_assignment, cfg.folds, point.q)?;
        let trace = d.x.frobenius_norm_sq() / d.x.cols() as f64;
        Ok((cv, pca, trace))
    })?;

    let mut rows = Vec::new();
    for (k, &lambda) in grid.iter().enumerate() {
        let mut tally = Tally::default();
        for (cv, _, _) in &runs {
            tally.push("spca", "cv_jrec", cv.curve[k]);
        }
        let mut point_rows = tally.rows(name, lambda)?;
        if runs.len() == 1 {
            point_rows[0].stderr = runs[0].0.stderr[k];
        }
        rows.extend(point_rows);
    }
    let mut tally = Tally::default();
    for (cv, pca, trace) in &runs {
        tally.push("spca", "best_lambda", cv.best[0]);
        tally.push("pca", "cv_jrec", *pca);
        tally.push("sample", "trace", *trace);
    }
    rows.extend(tally.rows(name, 0.0)?);
    emit(&rows)
}
