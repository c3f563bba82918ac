//! Grayscale images, binary PGM I/O, block splitting and the image SNR metric.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major grayscale image with pixel values on the [0, 255] scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        Ok(Self { height, width, pixels })
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn power(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum()
    }
}

/// Parses a binary `P5` PGM with maxval below 256.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!("unsupported image magic {:?}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM header field {s:?}")));
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("only 8-bit PGM is supported (maxval {maxval})")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::Format("truncated PGM raster".into()));
    }
    let pixels = bytes[pos..pos + need].iter().map(|&b| f64::from(b)).collect();
    GrayImage::new(height, width, pixels)
}

/// Serializes as `P5` with maxval 255, clamping to [0, 255] and rounding.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    out
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    parse_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

/// Block layout of an image: blocks in raster order, each vectorized column-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub height: usize,
    pub width: usize,
    pub block_h: usize,
    pub block_w: usize,
}

impl BlockGrid {
    pub fn new(height: usize, width: usize, block_h: usize, block_w: usize) -> Self {
        Self {
            height,
            width,
            block_h,
            block_w,
        }
    }

    pub fn blocks_down(&self) -> usize {
        self.height.div_ceil(self.block_h)
    }

    pub fn blocks_across(&self) -> usize {
        self.width.div_ceil(self.block_w)
    }

    pub fn block_count(&self) -> usize {
        self.blocks_down() * self.blocks_across()
    }

    pub fn block_len(&self) -> usize {
        self.block_h * self.block_w
    }
}

/// Splits into `block_h × block_w` blocks, replicating edge pixels to pad.
pub fn blockize(img: &GrayImage, block_h: usize, block_w: usize) -> (Vec<Vec<f64>>, BlockGrid) {
    let grid = BlockGrid::new(img.height, img.width, block_h, block_w);
    let mut blocks = Vec::with_capacity(grid.block_count());
    for by in 0..grid.blocks_down() {
        for bx in 0..grid.blocks_across() {
            let mut v = Vec::with_capacity(grid.block_len());
            for c in 0..block_w {
                let x = (bx * block_w + c).min(img.width - 1);
                for r in 0..block_h {
                    let y = (by * block_h + r).min(img.height - 1);
                    v.push(img.get(y, x));
                }
            }
            blocks.push(v);
        }
    }
    (blocks, grid)
}

/// Inverse of [`blockize`], dropping the padded region.
pub fn deblockize(blocks: &[Vec<f64>], grid: &BlockGrid) -> Result<GrayImage> {
    if blocks.len() != grid.block_count() {
        return Err(Error::DimensionMismatch {
            expected: grid.block_count(),
            got: blocks.len(),
        });
    }
    let mut img = GrayImage::new(grid.height, grid.width, vec![0.0; grid.height * grid.width])?;
    for (k, block) in blocks.iter().enumerate() {
        if block.len() != grid.block_len() {
            return Err(Error::DimensionMismatch {
                expected: grid.block_len(),
                got: block.len(),
            });
        }
        let (by, bx) = (k / grid.blocks_across(), k % grid.blocks_across());
        for c in 0..grid.block_w {
            let x = bx * grid.block_w + c;
            if x >= grid.width {
                continue;
            }
            for r in 0..grid.block_h {
                let y = by * grid.block_h + r;
                if y < grid.height {
                    img.set(y, x, block[c * grid.block_h + r]);
                }
            }
        }
    }
    Ok(img)
}

/// `10·log10(Σ clean² / Σ (clean − recon)²)`.
pub fn snr_im(clean: &GrayImage, recon: &GrayImage) -> Result<f64> {
    if (clean.height, clean.width) != (recon.height, recon.width) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            clean.height, clean.width, recon.height, recon.width
        )));
    }
    let err: f64 = clean
        .pixels
        .iter()
        .zip(&recon.pixels)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    if err == 0.0 {
        return Err(Error::PerfectReconstruction);
    }
    Ok(10.0 * (clean.power() / err).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> GrayImage {
        GrayImage::new(h, w, (0..h * w).map(|k| (k % 251) as f64).collect()).unwrap()
    }

    #[test]
    fn single_block_round_trip() {
        let img = ramp(8, 8);
        let (blocks, grid) = blockize(&img, 8, 8);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0][1], img.get(1, 0));
        assert_eq!(deblockize(&blocks, &grid).unwrap(), img);
    }

    #[test]
    fn tall_image_gives_two_blocks_in_raster_order() {
        let img = ramp(16, 8);
        let (blocks, grid) = blockize(&img, 8, 8);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[1][0], img.get(8, 0));
        assert_eq!(deblockize(&blocks, &grid).unwrap(), img);
    }

    #[test]
    fn block_count_for_180x256() {
        assert_eq!(BlockGrid::new(180, 256, 8, 8).block_count(), 736);
    }

    #[test]
    fn padding_replicates_edges_and_crops_back() {
        let img = ramp(10, 13);
        let (blocks, grid) = blockize(&img, 8, 8);
        assert_eq!(blocks.len(), 4);
        // last block row of the bottom-right block repeats image row 9, column 12
        assert_eq!(blocks[3][63], img.get(9, 12));
        assert_eq!(deblockize(&blocks, &grid).unwrap(), img);
    }

    #[test]
    fn pgm_round_trip_and_header_comments() {
        let img = ramp(3, 5);
        let bytes = encode_pgm(&img);
        assert!(bytes.starts_with(b"P5\n5 3\n255\n"));
        assert_eq!(parse_pgm(&bytes).unwrap(), img);
        let mut commented = b"P5 # comment\n5 3\n# another\n255\n".to_vec();
        commented.extend(img.pixels.iter().map(|&v| v as u8));
        assert_eq!(parse_pgm(&commented).unwrap(), img);
        assert!(parse_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x01").is_err());
    }

    #[test]
    fn pgm_write_clamps_and_rounds() {
        let img = GrayImage::new(1, 3, vec![-4.0, 12.6, 300.0]).unwrap();
        let back = parse_pgm(&encode_pgm(&img)).unwrap();
        assert_eq!(back.pixels, vec![0.0, 13.0, 255.0]);
    }

    #[test]
    fn snr_examples() {
        let img = ramp(4, 4);
        assert!(matches!(snr_im(&img, &img), Err(Error::PerfectReconstruction)));
        let zero = GrayImage::new(4, 4, vec![0.0; 16]).unwrap();
        assert!(snr_im(&img, &zero).unwrap().abs() < 1e-12);
        let half = GrayImage::new(4, 4, img.pixels.iter().map(|v| v / 2.0).collect()).unwrap();
        assert!((snr_im(&img, &half).unwrap() - 10.0 * 4f64.log10()).abs() < 1e-12);
    }
}
