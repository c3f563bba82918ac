//! A linear transform codec: `η = C(x − mean)`, vector-quantize `η`, decode `mean + R·η̂`
//! with `R = (CᵀC)†Cᵀ`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::matops::io::{read_dims_and_data, read_f64s, read_u16, read_u32, write_f64s, write_matrix_record};
use crate::matops::{column_mean, default_pinv_tol, pinv, sym_eig, Matrix};
use crate::spca::{fit, SpcaConfig};
use crate::vq::{lloyd_train, read_codebook, vq_decode, vq_encode, write_codebook, Codebook, DEFAULT_MAX_ITERS, DEFAULT_TOL};

const MAGIC: &[u8; 4] = b"SATC";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SatcCodec {
    pub mean: Vec<f64>,
    /// q×p reduction matrix.
    pub c: Matrix,
    /// p×q reconstruction matrix `(CᵀC)†Cᵀ`.
    pub recon: Matrix,
    /// `None` skips quantization (infinite rate).
    pub codebook: Option<Codebook>,
}

impl SatcCodec {
    /// Builds a codec around a given reduction matrix, training the quantizer on `C(x_t − mean)`.
    pub fn from_transform(x_train: &Matrix, mean: Vec<f64>, c: Matrix, rate_bits: Option<u32>, seed: u64) -> Result<Self> {
        let p = x_train.rows();
        if c.cols() != p || mean.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: c.cols(),
            });
        }
        let ctc = c.t_matmul(&c)?;
        let recon = pinv(&ctc, default_pinv_tol(&ctc))?.matmul(&c.transpose())?;
        let codebook = match rate_bits {
            Some(bits) => {
                let centered = center(x_train, &mean);
                let eta = c.matmul(&centered)?;
                Some(lloyd_train(&eta, bits, seed, DEFAULT_TOL, DEFAULT_MAX_ITERS)?)
            }
            None => None,
        };
        Ok(Self {
            mean,
            c,
            recon,
            codebook,
        })
    }

    pub fn p(&self) -> usize {
        self.c.cols()
    }

    pub fn q(&self) -> usize {
        self.c.rows()
    }

    pub fn rate_bits(&self) -> Option<u32> {
        self.codebook.as_ref().map(|cb| cb.rate_bits)
    }

    /// Reduced coefficients `C(x − mean)`.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.c.mul_vec(&centered)
    }

    /// `mean + R·η`.
    pub fn synthesize(&self, eta: &[f64]) -> Result<Vec<f64>> {
        let body = self.recon.mul_vec(eta)?;
        Ok(body.iter().zip(&self.mean).map(|(b, m)| b + m).collect())
    }

    /// Encode then decode; without a quantizer this is the projection path.
    pub fn roundtrip(&self, x: &[f64]) -> Result<Vec<f64>> {
        let eta = self.transform(x)?;
        match &self.codebook {
            Some(cb) => self.synthesize(cb.centroid(vq_encode(cb, &eta)?)),
            None => self.synthesize(&eta),
        }
    }

    fn quantizer(&self) -> Result<&Codebook> {
        self.codebook
            .as_ref()
            .ok_or_else(|| Error::Config("codec has no quantizer (unbounded rate)".into()))
    }
}

fn center(x: &Matrix, mean: &[f64]) -> Matrix {
    Matrix::from_fn(x.rows(), x.cols(), |i, t| x.get(i, t) - mean[i])
}

/// Fits S-PCA on mean-removed training columns and builds the codec from `Ĉ`.
pub fn satc_train(x_train: &Matrix, q: usize, rate_bits: Option<u32>, cfg: &SpcaConfig, seed: u64) -> Result<SatcCodec> {
    if cfg.q != q {
        return Err(Error::Config(format!("config q = {} but codec q = {q}", cfg.q)));
    }
    let mean = column_mean(x_train);
    let model = fit(&center(x_train, &mean), cfg, None)?;
    SatcCodec::from_transform(x_train, mean, model.c, rate_bits, seed)
}

/// The PCA transform codec: `C = Ûᵀ` from the centered sample covariance.
pub fn pca_tc_train(x_train: &Matrix, q: usize, rate_bits: Option<u32>, seed: u64) -> Result<SatcCodec> {
    let p = x_train.rows();
    if q == 0 || q > p {
        return Err(Error::Config(format!("q = {q} must lie in 1..={p}")));
    }
    let mean = column_mean(x_train);
    let cov = crate::matops::sample_covariance(x_train, true);
    let c = sym_eig(&cov)?.leading(q).transpose();
    SatcCodec::from_transform(x_train, mean, c, rate_bits, seed)
}

pub fn satc_encode(codec: &SatcCodec, x: &[f64]) -> Result<usize> {
    let eta = codec.transform(x)?;
    vq_encode(codec.quantizer()?, &eta)
}

pub fn satc_decode(codec: &SatcCodec, index: usize) -> Result<Vec<f64>> {
    let centroid = vq_decode(codec.quantizer()?, index)?;
    codec.synthesize(&centroid)
}

/// Layout: magic, u16 version, u32 p, u32 q, u8 has-codebook, mean, C record, R record, codebook.
pub fn write_codec<W: Write>(codec: &SatcCodec, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(codec.p() as u32).to_le_bytes())?;
    out.write_all(&(codec.q() as u32).to_le_bytes())?;
    out.write_all(&[u8::from(codec.codebook.is_some())])?;
    write_f64s(&mut out, &codec.mean)?;
    write_matrix_record(&mut out, &codec.c)?;
    write_matrix_record(&mut out, &codec.recon)?;
    if let Some(cb) = &codec.codebook {
        write_codebook(cb, &mut out)?;
    }
    Ok(())
}

pub fn read_codec<R: Read>(mut input: R) -> Result<SatcCodec> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing SATC magic".into()));
    }
    let version = read_u16(&mut input)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported codec version {version}")));
    }
    let p = read_u32(&mut input)? as usize;
    let q = read_u32(&mut input)? as usize;
    let mut flag = [0u8; 1];
    input.read_exact(&mut flag)?;
    let mean = read_f64s(&mut input, p)?;
    let c = read_dims_and_data(&mut input)?;
    let recon = read_dims_and_data(&mut input)?;
    if c.shape() != (q, p) || recon.shape() != (p, q) {
        return Err(Error::Format("codec matrices disagree with header".into()));
    }
    let codebook = if flag[0] == 1 {
        let cb = read_codebook(&mut input)?;
        if cb.dim() != q {
            return Err(Error::Format("codebook dimension disagrees with q".into()));
        }
        Some(cb)
    } else {
        None
    };
    Ok(SatcCodec {
        mean,
        c,
        recon,
        codebook,
    })
}
