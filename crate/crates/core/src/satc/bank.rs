//! Per-block-position codec banks for images, and the encoded index stream.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::matops::io::{read_f64s, read_u16, read_u32};
use crate::matops::{dct2_block_matrix, Matrix};
use crate::rng::derive_seed;
use crate::spca::SpcaConfig;

use super::codec::{pca_tc_train, read_codec, satc_decode, satc_encode, satc_train, write_codec, SatcCodec};
use super::image::{blockize, deblockize, BlockGrid, GrayImage};

const BANK_MAGIC: &[u8; 4] = b"SBNK";
const STREAM_MAGIC: &[u8; 4] = b"SATB";
const VERSION: u16 = 1;

/// Coordinates in which blocks are coded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Domain {
    Pixel,
    /// Separable 2-D orthonormal DCT of each block.
    #[default]
    Dct,
}

/// How the reduction matrix of each codec is learned.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformKind {
    Spca(SpcaConfig),
    Pca,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankConfig {
    pub transform: TransformKind,
    pub q: usize,
    pub rate_bits: Option<u32>,
    pub domain: Domain,
    /// One codec trained on all block positions instead of one per position.
    pub shared: bool,
    pub block: (usize, usize),
    /// Pixels are multiplied by this before coding, so penalties refer to a fixed intensity range.
    pub scale: f64,
    pub seed: u64,
}

impl BankConfig {
    pub fn new(transform: TransformKind, q: usize, rate_bits: Option<u32>) -> Self {
        Self {
            transform,
            q,
            rate_bits,
            domain: Domain::Dct,
            shared: false,
            block: (8, 8),
            scale: 1.0 / 255.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodecBank {
    pub grid: BlockGrid,
    pub domain: Domain,
    pub codecs: Vec<SatcCodec>,
    pub scale: f64,
    basis: Option<Matrix>,
}

/// Quantizer indices of one image, blocks in raster order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedImage {
    pub grid: BlockGrid,
    pub rate_bits: u32,
    pub indices: Vec<u32>,
}

fn domain_basis(domain: Domain, grid: &BlockGrid) -> Option<Matrix> {
    match domain {
        Domain::Pixel => None,
        Domain::Dct => Some(dct2_block_matrix(grid.block_h, grid.block_w)),
    }
}

/// Trains a codec per block position from blocks at that position across `images`.
pub fn image_codec_train(images: &[GrayImage], cfg: &BankConfig) -> Result<CodecBank> {
    if images.len() < 2 {
        return Err(Error::Config("need at least two training images".into()));
    }
    let (h, w) = (images[0].height, images[0].width);
    for img in images {
        if (img.height, img.width) != (h, w) {
            return Err(Error::DimensionMismatch {
                expected: h * w,
                got: img.height * img.width,
            });
        }
    }
    if !(cfg.scale.is_finite() && cfg.scale > 0.0) {
        return Err(Error::Config("intensity scale must be positive".into()));
    }
    let grid = BlockGrid::new(h, w, cfg.block.0, cfg.block.1);
    let basis = domain_basis(cfg.domain, &grid);
    let to_domain = |v: Vec<f64>| -> Result<Vec<f64>> {
        let v: Vec<f64> = v.into_iter().map(|a| a * cfg.scale).collect();
        match &basis {
            Some(t) => t.mul_vec(&v),
            None => Ok(v),
        }
    };
    let per_image: Vec<Vec<Vec<f64>>> = images
        .iter()
        .map(|img| blockize(img, cfg.block.0, cfg.block.1).0.into_iter().map(&to_domain).collect())
        .collect::<Result<_>>()?;

    let train_one = |cols: Vec<Vec<f64>>, seed: u64| -> Result<SatcCodec> {
        let x = Matrix::from_columns(&cols);
        match &cfg.transform {
            TransformKind::Spca(spca) => satc_train(&x, cfg.q, cfg.rate_bits, spca, seed),
            TransformKind::Pca => pca_tc_train(&x, cfg.q, cfg.rate_bits, seed),
        }
    };
    let codecs = if cfg.shared {
        let cols: Vec<Vec<f64>> = per_image.iter().flatten().cloned().collect();
        vec![train_one(cols, derive_seed(cfg.seed, 0))?]
    } else {
        (0..grid.block_count())
            .map(|k| {
                let cols = per_image.iter().map(|blocks| blocks[k].clone()).collect();
                train_one(cols, derive_seed(cfg.seed, k as u64))
            })
            .collect::<Result<_>>()?
    };
    Ok(CodecBank {
        grid,
        domain: cfg.domain,
        codecs,
        scale: cfg.scale,
        basis,
    })
}

impl CodecBank {
    pub fn codec(&self, position: usize) -> &SatcCodec {
        if self.codecs.len() == 1 {
            &self.codecs[0]
        } else {
            &self.codecs[position]
        }
    }

    pub fn rate_bits(&self) -> Option<u32> {
        self.codecs[0].rate_bits()
    }

    fn blocks_of(&self, img: &GrayImage) -> Result<Vec<Vec<f64>>> {
        if (img.height, img.width) != (self.grid.height, self.grid.width) {
            return Err(Error::ShapeMismatch(format!(
                "image is {}x{}, bank expects {}x{}",
                img.height, img.width, self.grid.height, self.grid.width
            )));
        }
        let (blocks, _) = blockize(img, self.grid.block_h, self.grid.block_w);
        blocks.into_iter().map(|v| self.to_domain(v)).collect()
    }

    fn to_domain(&self, v: Vec<f64>) -> Result<Vec<f64>> {
        let v: Vec<f64> = v.into_iter().map(|a| a * self.scale).collect();
        match &self.basis {
            Some(t) => t.mul_vec(&v),
            None => Ok(v),
        }
    }

    fn from_domain(&self, v: Vec<f64>) -> Result<Vec<f64>> {
        let v = match &self.basis {
            Some(t) => t.t_mul_vec(&v)?,
            None => v,
        };
        Ok(v.into_iter().map(|a| a / self.scale).collect())
    }

    pub fn encode_image(&self, img: &GrayImage) -> Result<EncodedImage> {
        let rate_bits = self
            .rate_bits()
            .ok_or_else(|| Error::Config("bank has no quantizer (unbounded rate)".into()))?;
        let indices = self
            .blocks_of(img)?
            .iter()
            .enumerate()
            .map(|(k, v)| satc_encode(self.codec(k), v).map(|i| i as u32))
            .collect::<Result<_>>()?;
        Ok(EncodedImage {
            grid: self.grid,
            rate_bits,
            indices,
        })
    }

    pub fn decode_image(&self, enc: &EncodedImage) -> Result<GrayImage> {
        if enc.grid != self.grid || enc.indices.len() != self.grid.block_count() {
            return Err(Error::Format("stream does not match the codec bank".into()));
        }
        let blocks = enc
            .indices
            .iter()
            .enumerate()
            .map(|(k, &i)| self.from_domain(satc_decode(self.codec(k), i as usize)?))
            .collect::<Result<Vec<_>>>()?;
        deblockize(&blocks, &self.grid)
    }

    /// Encode and decode every block in process; without quantizers this is pure projection.
    pub fn reconstruct_image(&self, img: &GrayImage) -> Result<GrayImage> {
        let blocks = self
            .blocks_of(img)?
            .iter()
            .enumerate()
            .map(|(k, v)| self.from_domain(self.codec(k).roundtrip(v)?))
            .collect::<Result<Vec<_>>>()?;
        deblockize(&blocks, &self.grid)
    }
}

fn write_grid<W: Write>(out: &mut W, grid: &BlockGrid) -> Result<()> {
    out.write_all(&(grid.height as u32).to_le_bytes())?;
    out.write_all(&(grid.width as u32).to_le_bytes())?;
    out.write_all(&(grid.block_h as u16).to_le_bytes())?;
    out.write_all(&(grid.block_w as u16).to_le_bytes())?;
    Ok(())
}

fn read_grid<R: Read>(input: &mut R) -> Result<BlockGrid> {
    let height = read_u32(input)? as usize;
    let width = read_u32(input)? as usize;
    let block_h = read_u16(input)? as usize;
    let block_w = read_u16(input)? as usize;
    if height == 0 || width == 0 || block_h == 0 || block_w == 0 {
        return Err(Error::Format("empty block grid".into()));
    }
    Ok(BlockGrid::new(height, width, block_h, block_w))
}

fn check_magic<R: Read>(input: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut got = [0u8; 4];
    input.read_exact(&mut got)?;
    if &got != magic {
        return Err(Error::Format(format!("expected {} magic", String::from_utf8_lossy(magic))));
    }
    let version = read_u16(input)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

/// Layout: magic `SBNK`, u16 version, grid, u8 domain, f64 scale, u32 codec count, codec records.
pub fn write_bank<W: Write>(bank: &CodecBank, mut out: W) -> Result<()> {
    out.write_all(BANK_MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    write_grid(&mut out, &bank.grid)?;
    out.write_all(&[u8::from(bank.domain == Domain::Dct)])?;
    out.write_all(&bank.scale.to_le_bytes())?;
    out.write_all(&(bank.codecs.len() as u32).to_le_bytes())?;
    for codec in &bank.codecs {
        write_codec(codec, &mut out)?;
    }
    Ok(())
}

pub fn read_bank<R: Read>(mut input: R) -> Result<CodecBank> {
    check_magic(&mut input, BANK_MAGIC)?;
    let grid = read_grid(&mut input)?;
    let mut flag = [0u8; 1];
    input.read_exact(&mut flag)?;
    let domain = match flag[0] {
        0 => Domain::Pixel,
        1 => Domain::Dct,
        other => return Err(Error::Format(format!("unknown domain tag {other}"))),
    };
    let scale = read_f64s(&mut input, 1)?[0];
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Format("intensity scale must be positive".into()));
    }
    let count = read_u32(&mut input)? as usize;
    if count != 1 && count != grid.block_count() {
        return Err(Error::Format(format!("{count} codecs for {} blocks", grid.block_count())));
    }
    let codecs = (0..count).map(|_| read_codec(&mut input)).collect::<Result<Vec<_>>>()?;
    if codecs.iter().any(|c| c.p() != grid.block_len()) {
        return Err(Error::Format("codec dimension disagrees with block size".into()));
    }
    Ok(CodecBank {
        basis: domain_basis(domain, &grid),
        grid,
        domain,
        codecs,
        scale,
    })
}

/// Layout: magic `SATB`, u16 version, grid, u8 rate, u32 count, u32 indices in raster order.
pub fn write_stream<W: Write>(enc: &EncodedImage, mut out: W) -> Result<()> {
    out.write_all(STREAM_MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    write_grid(&mut out, &enc.grid)?;
    out.write_all(&[enc.rate_bits as u8])?;
    out.write_all(&(enc.indices.len() as u32).to_le_bytes())?;
    for i in &enc.indices {
        out.write_all(&i.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_stream<R: Read>(mut input: R) -> Result<EncodedImage> {
    check_magic(&mut input, STREAM_MAGIC)?;
    let grid = read_grid(&mut input)?;
    let mut rate = [0u8; 1];
    input.read_exact(&mut rate)?;
    let count = read_u32(&mut input)? as usize;
    if count != grid.block_count() {
        return Err(Error::Format(format!("{count} indices for {} blocks", grid.block_count())));
    }
    let indices = (0..count).map(|_| read_u32(&mut input)).collect::<Result<_>>()?;
    Ok(EncodedImage {
        grid,
        rate_bits: u32::from(rate[0]),
        indices,
    })
}
