//! The image experiment: block codecs on a noisy grayscale corpus, plus the DCT baseline.

use std::fs;
use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::matops::{column_mean, dct2_block_matrix, dct_matrix, Matrix};
use crate::rng::{derive_seed, gauss, seeded};
use crate::satc::{blockize, deblockize, image_codec_train, read_pgm, snr_im, BankConfig, BlockGrid, Domain, GrayImage, TransformKind};
use crate::spca::SpcaConfig;
use crate::vq::{lloyd_train, vq_decode, vq_encode, Codebook, DEFAULT_MAX_ITERS, DEFAULT_TOL};

use super::config::ExperimentConfig;
use super::metrics::{MetricsRow, Tally};

const BLOCK: usize = 8;

/// Transform coder that keeps the `q` largest-magnitude coefficients of each vector.
///
/// The kept positions travel as free side information; only their values are quantized,
/// in increasing position order.
#[derive(Debug, Clone, PartialEq)]
pub struct DctTc {
    /// Orthonormal analysis matrix; rows are basis functions.
    pub basis: Matrix,
    pub mean: Vec<f64>,
    pub q: usize,
    pub codebook: Option<Codebook>,
}

impl DctTc {
    pub fn train(x_train: &Matrix, basis: Matrix, q: usize, rate_bits: Option<u32>, center: bool, seed: u64) -> Result<Self> {
        let p = x_train.rows();
        if basis.shape() != (p, p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: basis.rows(),
            });
        }
        if q == 0 || q > p {
            return Err(Error::Config(format!("q = {q} must lie in 1..={p}")));
        }
        let mean = if center { column_mean(x_train) } else { vec![0.0; p] };
        let mut tc = Self {
            basis,
            mean,
            q,
            codebook: None,
        };
        if let Some(bits) = rate_bits {
            let kept: Vec<Vec<f64>> = (0..x_train.cols())
                .map(|t| tc.coefficients(&x_train.col(t)).map(|c| top_q(&c, q).1))
                .collect::<Result<_>>()?;
            tc.codebook = Some(lloyd_train(&Matrix::from_columns(&kept), bits, seed, DEFAULT_TOL, DEFAULT_MAX_ITERS)?);
        }
        Ok(tc)
    }

    fn coefficients(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.basis.mul_vec(&centered)
    }

    pub fn roundtrip(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (positions, mut values) = top_q(&self.coefficients(x)?, self.q);
        if let Some(cb) = &self.codebook {
            values = vq_decode(cb, vq_encode(cb, &values)?)?;
        }
        let mut coeffs = vec![0.0; self.mean.len()];
        for (&k, v) in positions.iter().zip(values) {
            coeffs[k] = v;
        }
        let mut out = self.basis.t_mul_vec(&coeffs)?;
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o += m;
        }
        Ok(out)
    }
}

/// Positions (ascending) and values of the `q` largest magnitudes; ties favor lower positions.
fn top_q(coeffs: &[f64], q: usize) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..coeffs.len()).collect();
    order.sort_by(|&a, &b| coeffs[b].abs().total_cmp(&coeffs[a].abs()).then(a.cmp(&b)));
    let mut positions = order[..q].to_vec();
    positions.sort_unstable();
    let values = positions.iter().map(|&k| coeffs[k]).collect();
    (positions, values)
}

/// Mean-distortion row for a 1-D DCT coder on column data; an unbounded rate reports sweep value 0.
pub fn dct_tc_baseline(x_train: &Matrix, x_test: &Matrix, s_test: &Matrix, q: usize, rate_bits: Option<u32>, seed: u64) -> Result<Vec<MetricsRow>> {
    if x_test.shape() != s_test.shape() || x_test.rows() != x_train.rows() {
        return Err(Error::ShapeMismatch("train and test data disagree".into()));
    }
    let tc = DctTc::train(x_train, dct_matrix(x_train.rows()), q, rate_bits, false, seed)?;
    let mut tally = Tally::default();
    for t in 0..x_test.cols() {
        let recon = tc.roundtrip(&x_test.col(t))?;
        let err = recon.iter().zip(s_test.col(t)).map(|(a, b)| (a - b).powi(2)).sum();
        tally.push("dct_tc", "distortion", err);
    }
    let mut rows = tally.rows("dct_tc", rate_bits.map_or(0.0, f64::from))?;
    for row in &mut rows {
        row.runs = 1;
        row.stderr = 0.0;
    }
    Ok(rows)
}

/// Smooth synthetic grayscale scenes: a few low-frequency waves, some hills and pits, fine grain.
pub fn terrain_corpus(count: usize, height: usize, width: usize, seed: u64) -> Result<Vec<GrayImage>> {
    (0..count)
        .map(|i| {
            let mut rng = seeded(derive_seed(seed, i as u64));
            let waves: Vec<(f64, f64, f64, f64)> = (0..5)
                .map(|_| {
                    let angle = rng.random_range(0.0..std::f64::consts::PI);
                    let freq = rng.random_range(0.01..0.08) * std::f64::consts::TAU;
                    (freq * angle.cos(), freq * angle.sin(), rng.random_range(0.0..std::f64::consts::TAU), gauss(&mut rng))
                })
                .collect();
            let bumps: Vec<(f64, f64, f64, f64)> = (0..6)
                .map(|_| {
                    (
                        rng.random_range(0.0..height as f64),
                        rng.random_range(0.0..width as f64),
                        rng.random_range(2.0..10.0),
                        1.5 * gauss(&mut rng),
                    )
                })
                .collect();
            let mut field: Vec<f64> = (0..height * width)
                .map(|k| {
                    let (y, x) = ((k / width) as f64, (k % width) as f64);
                    let w: f64 = waves.iter().map(|(fy, fx, ph, a)| a * (fy * y + fx * x + ph).cos()).sum();
                    let b: f64 = bumps
                        .iter()
                        .map(|(cy, cx, r, a)| a * (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * r * r)).exp())
                        .sum();
                    w + b + 0.1 * gauss(&mut rng)
                })
                .collect();
            let mean = field.iter().sum::<f64>() / field.len() as f64;
            let sd = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / field.len() as f64).sqrt().max(1e-12);
            let level = rng.random_range(90.0..160.0);
            for v in &mut field {
                *v = (level + 35.0 * (*v - mean) / sd).clamp(0.0, 255.0);
            }
            GrayImage::new(height, width, field)
        })
        .collect()
}

/// Clean images with their noisy observations; the first `train` pairs are for training.
#[derive(Debug, Clone)]
pub struct ImageCorpus {
    pub clean: Vec<GrayImage>,
    pub noisy: Vec<GrayImage>,
    pub train: usize,
}

impl ImageCorpus {
    /// Adds colored noise `w = α·M·ξ` to every 8×8 block (column-major), with `M` i.i.d. Gaussian
    /// and `α` set so the per-pixel noise power sits `snr_db` below the mean clean pixel power.
    pub fn with_block_noise(clean: Vec<GrayImage>, train: usize, snr_db: f64, seed: u64) -> Result<Self> {
        if clean.is_empty() || train == 0 || train >= clean.len() {
            return Err(Error::Config("need at least one training and one test image".into()));
        }
        let p = BLOCK * BLOCK;
        let mut rng = seeded(seed);
        let m = Matrix::from_fn(p, p, |_, _| gauss(&mut rng));
        let pixels: usize = clean.iter().map(|im| im.pixels.len()).sum();
        let signal = clean.iter().map(GrayImage::power).sum::<f64>() / pixels as f64;
        let alpha = (signal * p as f64 / (m.frobenius_norm_sq() * 10f64.powf(snr_db / 10.0))).sqrt();
        let factor = m.scale(alpha);
        let noisy = clean
            .iter()
            .enumerate()
            .map(|(i, img)| {
                let mut rng = seeded(derive_seed(seed, i as u64 + 1));
                let (blocks, grid) = blockize(img, BLOCK, BLOCK);
                let noisy: Vec<Vec<f64>> = blocks
                    .into_iter()
                    .map(|b| {
                        let xi: Vec<f64> = (0..p).map(|_| gauss(&mut rng)).collect();
                        let w = factor.mul_vec(&xi)?;
                        Ok(b.iter().zip(w).map(|(a, n)| a + n).collect())
                    })
                    .collect::<Result<_>>()?;
                deblockize(&noisy, &grid)
            })
            .collect::<Result<_>>()?;
        Ok(Self { clean, noisy, train })
    }
}

/// Every `.pgm` file in `dir`, in file-name order.
pub fn read_pgm_dir(dir: &Path) -> Result<Vec<GrayImage>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")));
    paths.sort();
    paths.iter().map(|p| read_pgm(p)).collect()
}

fn dct_bank(train: &[GrayImage], q: usize, rate: u32, shared: bool, seed: u64) -> Result<(BlockGrid, Vec<DctTc>)> {
    let per_image: Vec<Vec<Vec<f64>>> = train.iter().map(|im| blockize(im, BLOCK, BLOCK).0).collect();
    let (_, grid) = blockize(&train[0], BLOCK, BLOCK);
    let basis = dct2_block_matrix(BLOCK, BLOCK);
    let coders = if shared {
        let cols: Vec<Vec<f64>> = per_image.iter().flatten().cloned().collect();
        vec![DctTc::train(&Matrix::from_columns(&cols), basis, q, Some(rate), true, derive_seed(seed, 0))?]
    } else {
        (0..grid.block_count())
            .map(|k| {
                let cols: Vec<&Vec<f64>> = per_image.iter().map(|b| &b[k]).collect();
                DctTc::train(&Matrix::from_columns(&cols), basis.clone(), q, Some(rate), true, derive_seed(seed, k as u64))
            })
            .collect::<Result<_>>()?
    };
    Ok((grid, coders))
}

fn dct_reconstruct(img: &GrayImage, grid: &BlockGrid, coders: &[DctTc]) -> Result<GrayImage> {
    let (blocks, _) = blockize(img, BLOCK, BLOCK);
    let out = blocks
        .iter()
        .enumerate()
        .map(|(k, b)| coders[if coders.len() == 1 { 0 } else { k }].roundtrip(b))
        .collect::<Result<Vec<_>>>()?;
    deblockize(&out, grid)
}

pub(super) fn run_image_pipeline(cfg: &ExperimentConfig, emit: &mut dyn FnMut(&[MetricsRow]) -> Result<()>) -> Result<()> {
    let clean = match &cfg.image_dir {
        Some(dir) => read_pgm_dir(dir)?,
        None => terrain_corpus(cfg.n_images, cfg.image_height, cfg.image_width, derive_seed(cfg.seed, 10))?,
    };
    if clean.len() <= cfg.train_images {
        return Err(Error::Config(format!(
            "{} images cannot leave a test set after {} training images",
            clean.len(),
            cfg.train_images
        )));
    }
    let corpus = ImageCorpus::with_block_noise(clean, cfg.train_images, cfg.snr_db[0], derive_seed(cfg.seed, 11))?;
    let train = &corpus.noisy[..corpus.train];
    let q = cfg.q[0];
    let spca = SpcaConfig::new(q, cfg.lambda.lambda(corpus.train))
        .with_mu(cfg.mu)
        .with_max_sweeps(cfg.max_sweeps);
    for &rate in &cfg.rate_bits {
        let bank_cfg = |transform| BankConfig {
            shared: cfg.shared_codec,
            domain: Domain::Dct,
            seed: derive_seed(cfg.seed, 12),
            ..BankConfig::new(transform, q, Some(rate))
        };
        let satc = image_codec_train(train, &bank_cfg(TransformKind::Spca(spca.clone())))?;
        let pca = image_codec_train(train, &bank_cfg(TransformKind::Pca))?;
        let (grid, dct) = dct_bank(train, q, rate, cfg.shared_codec, derive_seed(cfg.seed, 13))?;

        let mut tally = Tally::default();
        for (clean, noisy) in corpus.clean.iter().zip(&corpus.noisy).skip(corpus.train) {
            tally.push("satc", "snr_im", snr_im(clean, &satc.reconstruct_image(noisy)?)?);
            tally.push("pca_tc", "snr_im", snr_im(clean, &pca.reconstruct_image(noisy)?)?);
            tally.push("dct_tc", "snr_im", snr_im(clean, &dct_reconstruct(noisy, &grid, &dct)?)?);
            tally.push("noisy", "snr_im", snr_im(clean, noisy)?);
        }
        emit(&tally.rows(cfg.experiment.name(), f64::from(rate))?)?;
    }
    Ok(())
}
