use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MseVsQ,
    MseVsSnr,
    EstmseVsN,
    SupportVsN,
    RateDistortion,
    CvCurve,
    ImagePipeline,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::MseVsQ,
        ExperimentKind::MseVsSnr,
        ExperimentKind::EstmseVsN,
        ExperimentKind::SupportVsN,
        ExperimentKind::RateDistortion,
        ExperimentKind::CvCurve,
        ExperimentKind::ImagePipeline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MseVsQ => "mse_vs_q",
            ExperimentKind::MseVsSnr => "mse_vs_snr",
            ExperimentKind::EstmseVsN => "estmse_vs_n",
            ExperimentKind::SupportVsN => "support_vs_n",
            ExperimentKind::RateDistortion => "rate_distortion",
            ExperimentKind::CvCurve => "cv_curve",
            ExperimentKind::ImagePipeline => "image_pipeline",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// How the sparsity penalty is set for a training set of `n` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum LambdaPolicy {
    /// The same λ on every entry.
    Fixed { lambda: f64 },
    /// `λ = scale·n^0.3 / n` with weights `|Û_pca|^(−γ)`.
    Adaptive { scale: f64, gamma: f64 },
}

impl LambdaPolicy {
    pub fn lambda(&self, n: usize) -> f64 {
        match *self {
            LambdaPolicy::Fixed { lambda } => lambda,
            LambdaPolicy::Adaptive { scale, .. } => scale * (n as f64).powf(0.3) / n as f64,
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            LambdaPolicy::Fixed { .. } => None,
            LambdaPolicy::Adaptive { gamma, .. } => Some(gamma),
        }
    }
}

/// Settings for one experiment. Which list is swept depends on `experiment`:
/// `q` for `mse_vs_q`, `snr_db` for `mse_vs_snr`, `n_train` for the `*_vs_n` runs,
/// `rate_bits` for `rate_distortion` and `image_pipeline`; other lists use their first entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub p: usize,
    /// Rank of the generated signal subspace.
    pub r: usize,
    pub q: Vec<usize>,
    /// Number of diagonal blocks in the generated covariance.
    pub groups: usize,
    pub n_train: Vec<usize>,
    pub n_test: usize,
    pub mc_runs: usize,
    pub zero_fraction: f64,
    /// Empty means noiseless.
    pub snr_db: Vec<f64>,
    pub rate_bits: Vec<u32>,
    pub lambda: LambdaPolicy,
    /// Multipliers of the policy's λ tried on separate calibration draws; empty disables.
    pub lambda_grid: Vec<f64>,
    pub calib_runs: usize,
    pub mu: f64,
    pub max_sweeps: usize,
    /// Truncated sweep counts reported alongside the converged solver.
    pub taus: Vec<usize>,
    pub with_bcd: bool,
    pub folds: usize,
    pub cv_lambda_min: f64,
    pub cv_lambda_max: f64,
    pub cv_points: usize,
    /// PGM corpus; a synthetic terrain corpus is generated when absent.
    pub image_dir: Option<PathBuf>,
    pub n_images: usize,
    pub train_images: usize,
    pub image_height: usize,
    pub image_width: usize,
    /// One codec for all block positions instead of one per position.
    pub shared_codec: bool,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(ExperimentKind::MseVsQ)
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for each experiment.
    pub fn preset(kind: ExperimentKind) -> Self {
        let base = Self {
            experiment: kind,
            p: 14,
            r: 8,
            q: (1..=8).collect(),
            groups: 2,
            n_train: vec![50],
            n_test: 1000,
            mc_runs: 50,
            zero_fraction: 0.8,
            snr_db: Vec::new(),
            rate_bits: Vec::new(),
            lambda: LambdaPolicy::Adaptive { scale: 1.0, gamma: 1.0 },
            lambda_grid: vec![0.0, 0.03, 0.1, 0.3, 1.0, 3.0],
            calib_runs: 20,
            mu: crate::spca::DEFAULT_MU,
            max_sweeps: crate::spca::DEFAULT_MAX_SWEEPS,
            taus: Vec::new(),
            with_bcd: false,
            folds: 5,
            cv_lambda_min: 1e-3,
            cv_lambda_max: 1e2,
            cv_points: 16,
            image_dir: None,
            n_images: 40,
            train_images: 30,
            image_height: 64,
            image_width: 64,
            shared_codec: false,
            seed: 1,
            threads: None,
        };
        match kind {
            ExperimentKind::MseVsQ => base,
            ExperimentKind::MseVsSnr => Self {
                r: 3,
                q: vec![3],
                zero_fraction: 0.7,
                snr_db: vec![0.0, 5.0, 10.0],
                lambda: LambdaPolicy::Fixed { lambda: 5e-3 },
                lambda_grid: Vec::new(),
                mc_runs: 100,
                ..base
            },
            ExperimentKind::EstmseVsN => Self {
                q: vec![2],
                zero_fraction: 0.7,
                n_train: vec![10, 20, 50, 100, 200, 500, 1000],
                lambda_grid: Vec::new(),
                taus: vec![1, 2, 5],
                ..base
            },
            ExperimentKind::SupportVsN => Self {
                q: vec![2],
                n_train: vec![100, 1000, 10000],
                lambda: LambdaPolicy::Adaptive { scale: 10.0, gamma: 1.0 },
                lambda_grid: Vec::new(),
                taus: vec![1, 2, 5],
                ..base
            },
            ExperimentKind::RateDistortion => Self {
                r: 3,
                q: vec![3],
                n_train: vec![22],
                snr_db: vec![5.0],
                rate_bits: (2..=7).collect(),
                lambda_grid: Vec::new(),
                ..base
            },
            ExperimentKind::CvCurve => Self {
                r: 14,
                q: vec![2],
                mc_runs: 1,
                lambda: LambdaPolicy::Fixed { lambda: 0.0 },
                lambda_grid: Vec::new(),
                ..base
            },
            ExperimentKind::ImagePipeline => Self {
                q: vec![14],
                snr_db: vec![15.0],
                rate_bits: vec![7],
                lambda: LambdaPolicy::Fixed { lambda: 2e-2 },
                lambda_grid: Vec::new(),
                mc_runs: 1,
                ..base
            },
        }
    }

    /// Parses a JSON object; fields it omits come from the preset of its `experiment`.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let serde_json::Value::Object(fields) = value else {
            return Err(Error::Config("experiment config must be a JSON object".into()));
        };
        let kind = match fields.get("experiment") {
            Some(v) => serde_json::from_value(v.clone())?,
            None => ExperimentKind::MseVsQ,
        };
        let serde_json::Value::Object(mut merged) = serde_json::to_value(Self::preset(kind))? else {
            unreachable!("config serializes to an object");
        };
        merged.extend(fields);
        Ok(serde_json::from_value(serde_json::Value::Object(merged))?)
    }

    /// Switches to the full Monte-Carlo count.
    pub fn full(mut self) -> Self {
        if self.mc_runs > 1 {
            self.mc_runs = 200;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.p == 0 || self.r == 0 || self.r > self.p {
            return bad("need 1 <= r <= p");
        }
        let q_cap = if self.experiment == ExperimentKind::ImagePipeline { 64 } else { self.r };
        if self.q.is_empty() || self.q.iter().any(|&q| q == 0 || q > q_cap) {
            return bad("every q must lie in 1..=r (1..=64 for images)");
        }
        if self.n_train.is_empty() || self.n_train.contains(&0) {
            return bad("n_train must list positive sizes");
        }
        if self.n_test == 0 || self.mc_runs == 0 {
            return bad("n_test and mc_runs must be positive");
        }
        if !(0.0..1.0).contains(&self.zero_fraction) {
            return bad("zero_fraction must lie in [0, 1)");
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr values must be finite");
        }
        if !(self.mu.is_finite() && self.mu > 0.0) || self.max_sweeps == 0 {
            return bad("mu and max_sweeps must be positive");
        }
        match self.lambda {
            LambdaPolicy::Fixed { lambda } if !(lambda.is_finite() && lambda >= 0.0) => return bad("lambda must be nonnegative"),
            LambdaPolicy::Adaptive { scale, gamma } if !(scale.is_finite() && scale >= 0.0 && gamma.is_finite() && gamma >= 0.0) => {
                return bad("adaptive scale and gamma must be nonnegative")
            }
            _ => {}
        }
        if self.lambda_grid.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return bad("lambda_grid multipliers must be nonnegative");
        }
        if !self.lambda_grid.is_empty() && self.calib_runs == 0 {
            return bad("calib_runs must be positive when lambda_grid is set");
        }
        if self.taus.contains(&0) {
            return bad("taus must be positive");
        }
        match self.experiment {
            ExperimentKind::MseVsSnr if self.snr_db.is_empty() => bad("mse_vs_snr needs snr_db"),
            ExperimentKind::RateDistortion | ExperimentKind::ImagePipeline if self.rate_bits.is_empty() => bad("rate_bits must not be empty"),
            ExperimentKind::RateDistortion if self.snr_db.is_empty() => bad("rate_distortion needs snr_db"),
            ExperimentKind::CvCurve
                if self.folds < 2 || self.cv_points < 2 || !(self.cv_lambda_min > 0.0 && self.cv_lambda_max > self.cv_lambda_min) =>
            {
                bad("cv_curve needs folds >= 2 and a positive increasing lambda range")
            }
            ExperimentKind::ImagePipeline if self.snr_db.is_empty() => bad("image_pipeline needs snr_db"),
            ExperimentKind::ImagePipeline if self.train_images < 2 || self.train_images >= self.n_images => {
                bad("image_pipeline needs 2 <= train_images < n_images")
            }
            _ if self.rate_bits.iter().any(|&b| b == 0 || b > 16) => bad("rate_bits must lie in 1..=16"),
            _ => Ok(()),
        }
    }
}
