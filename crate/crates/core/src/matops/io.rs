//! Matrix file formats: CSV with a `rows,cols` header line, and the binary `MATX` container.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

const MATX_MAGIC: &[u8; 4] = b"MATX";

pub fn write_csv<W: Write>(m: &Matrix, mut out: W) -> Result<()> {
    writeln!(out, "{},{}", m.rows(), m.cols())?;
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Format("empty csv".into()))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("bad csv header {header:?}")))?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Format(format!("bad csv header {header:?}")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let before = data.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad number {tok:?} on row {i}")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::Format(format!("row {i} has {} fields, expected {cols}", data.len() - before)));
        }
    }
    if data.len() != rows * cols {
        return Err(Error::Format(format!("expected {rows} rows, found {}", data.len() / cols.max(1))));
    }
    Matrix::new(rows, cols, data)
}

pub fn write_matx<W: Write>(m: &Matrix, mut out: W) -> Result<()> {
    out.write_all(MATX_MAGIC)?;
    write_dims(&mut out, m)?;
    write_f64s(&mut out, m.data())
}

pub fn read_matx<R: Read>(mut input: R) -> Result<Matrix> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MATX_MAGIC {
        return Err(Error::Format("missing MATX magic".into()));
    }
    read_dims_and_data(&mut input)
}

/// Writes u32 rows and u32 cols, little-endian.
pub(crate) fn write_dims<W: Write>(out: &mut W, m: &Matrix) -> Result<()> {
    out.write_all(&u32::try_from(m.rows()).map_err(|_| Error::Format("too many rows".into()))?.to_le_bytes())?;
    out.write_all(&u32::try_from(m.cols()).map_err(|_| Error::Format("too many cols".into()))?.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_f64s<W: Write>(out: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_u16<R: Read>(input: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    input.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

pub(crate) fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64s<R: Read>(input: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    input.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Reads a dims header followed by row-major data, as written by [`write_dims`] and [`write_f64s`].
pub(crate) fn read_dims_and_data<R: Read>(input: &mut R) -> Result<Matrix> {
    let rows = read_u32(input)? as usize;
    let cols = read_u32(input)? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Format(format!("empty matrix {rows}x{cols}")));
    }
    let data = read_f64s(input, rows * cols)?;
    Matrix::new(rows, cols, data)
}

pub(crate) fn write_matrix_record<W: Write>(out: &mut W, m: &Matrix) -> Result<()> {
    write_dims(out, m)?;
    write_f64s(out, m.data())
}

/// Loads a matrix, choosing the format from the extension (`.csv` or anything else as MATX).
pub fn load_matrix(path: &Path) -> Result<Matrix> {
    if is_csv(path) {
        parse_csv(&fs::read_to_string(path)?)
    } else {
        read_matx(fs::File::open(path)?)
    }
}

pub fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut buf = Vec::new();
    if is_csv(path) {
        write_csv(m, &mut buf)?;
    } else {
        write_matx(m, &mut buf)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}
