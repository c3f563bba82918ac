//! Lloyd-Max vector quantizer.

use std::io::{Read, Write};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::matops::io::{read_f64s, read_u16, read_u32, write_f64s};
use crate::matops::Matrix;
use crate::rng::seeded;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITERS: usize = 200;
const MAGIC: &[u8; 4] = b"VQCB";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    /// One centroid per row, `L = 2^rate_bits` rows.
    pub centroids: Matrix,
    pub rate_bits: u32,
    /// Mean squared distortion of each partition step during training.
    pub distortion_trace: Vec<f64>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.centroids.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn centroid(&self, index: usize) -> &[f64] {
        self.centroids.row(index)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Index and squared distance of the nearest row of `centroids`; ties go to the lower index.
fn nearest(centroids: &Matrix, v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for l in 0..centroids.rows() {
        let d = sq_dist(centroids.row(l), v);
        if d < best.1 {
            best = (l, d);
        }
    }
    best
}

/// Trains `2^rate_bits` centroids on the columns of `data` (q×n).
///
/// Seeding is k-means++; a centroid whose cell empties is moved to the sample with the
/// largest current error.
pub fn lloyd_train(data: &Matrix, rate_bits: u32, seed: u64, tol: f64, max_iters: usize) -> Result<Codebook> {
    if rate_bits > 24 {
        return Err(Error::Config(format!("rate of {rate_bits} bits is too large")));
    }
    let (q, n) = data.shape();
    let levels = 1usize << rate_bits;
    let points: Vec<Vec<f64>> = (0..n).map(|t| data.col(t)).collect();
    let mut rng = seeded(seed);

    // k-means++ seeding
    let mut centroids = Matrix::zeros(levels, q);
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(&points[first]);
    let mut d2: Vec<f64> = points.iter().map(|x| sq_dist(x, &points[first])).collect();
    for l in 1..levels {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (t, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = t;
                    break;
                }
                target -= w;
            }
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            // every sample already has an exact codeword
            l % n
        };
        centroids.row_mut(l).copy_from_slice(&points[pick]);
        for (t, x) in points.iter().enumerate() {
            d2[t] = d2[t].min(sq_dist(x, &points[pick]));
        }
    }

    let mut trace = Vec::new();
    let mut assign = vec![0usize; n];
    let mut err = vec![0.0; n];
    for _ in 0..max_iters.max(1) {
        for (t, x) in points.iter().enumerate() {
            let (l, d) = nearest(&centroids, x);
            assign[t] = l;
            err[t] = d;
        }
        let distortion = err.iter().sum::<f64>() / n as f64;
        let prev = trace.last().copied();
        trace.push(distortion);
        if let Some(prev) = prev {
            if distortion == 0.0 || (prev - distortion) <= tol * prev {
                break;
            }
        } else if distortion == 0.0 {
            break;
        }

        let mut sums = Matrix::zeros(levels, q);
        let mut counts = vec![0usize; levels];
        for (t, x) in points.iter().enumerate() {
            counts[assign[t]] += 1;
            for (s, v) in sums.row_mut(assign[t]).iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for l in 0..levels {
            if counts[l] > 0 {
                let c = counts[l] as f64;
                for (dst, s) in centroids.row_mut(l).iter_mut().zip(sums.row(l)) {
                    *dst = s / c;
                }
                continue;
            }
            let worst = (0..n)
                .filter(|&t| !taken[t] && err[t] > 0.0)
                .max_by(|&a, &b| err[a].total_cmp(&err[b]).then(b.cmp(&a)));
            if let Some(t) = worst {
                taken[t] = true;
                centroids.row_mut(l).copy_from_slice(&points[t]);
            }
        }
    }
    Ok(Codebook {
        centroids,
        rate_bits,
        distortion_trace: trace,
    })
}

pub fn vq_encode(cb: &Codebook, beta: &[f64]) -> Result<usize> {
    if beta.len() != cb.dim() {
        return Err(Error::DimensionMismatch {
            expected: cb.dim(),
            got: beta.len(),
        });
    }
    Ok(nearest(&cb.centroids, beta).0)
}

pub fn vq_decode(cb: &Codebook, index: usize) -> Result<Vec<f64>> {
    if index >= cb.len() {
        return Err(Error::IndexOutOfRange {
            index,
            len: cb.len(),
        });
    }
    Ok(cb.centroid(index).to_vec())
}

pub fn write_codebook<W: Write>(cb: &Codebook, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(cb.len() as u32).to_le_bytes())?;
    out.write_all(&(cb.dim() as u32).to_le_bytes())?;
    write_f64s(&mut out, cb.centroids.data())
}

pub fn read_codebook<R: Read>(mut input: R) -> Result<Codebook> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing VQCB magic".into()));
    }
    let version = read_u16(&mut input)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported codebook version {version}")));
    }
    let levels = read_u32(&mut input)? as usize;
    let q = read_u32(&mut input)? as usize;
    if levels == 0 || !levels.is_power_of_two() || q == 0 {
        return Err(Error::Format(format!("bad codebook shape {levels}x{q}")));
    }
    let centroids = Matrix::new(levels, q, read_f64s(&mut input, levels * q)?)?;
    Ok(Codebook {
        centroids,
        rate_bits: levels.trailing_zeros(),
        distortion_trace: Vec::new(),
    })
}
