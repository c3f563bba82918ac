//! Binary model container (`SPCA`) plus a JSON sidecar holding the config.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{SpcaConfig, SpcaModel};
use crate::error::{Error, Result};
use crate::matops::io::{read_dims_and_data, read_f64s, read_u16, read_u32, write_f64s, write_matrix_record};

const MAGIC: &[u8; 4] = b"SPCA";
const VERSION: u16 = 1;

/// Layout: magic, u16 version, u32 p, u32 q, u32 sweeps, u8 converged, u8 has-basis,
/// then B, C and (optionally) the basis as dims+data records, then u32 trace length and the trace.
pub fn write_model<W: Write>(model: &SpcaModel, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(model.p() as u32).to_le_bytes())?;
    out.write_all(&(model.q() as u32).to_le_bytes())?;
    out.write_all(&(model.sweeps as u32).to_le_bytes())?;
    out.write_all(&[u8::from(model.converged), u8::from(model.basis.is_some())])?;
    write_matrix_record(&mut out, &model.b)?;
    write_matrix_record(&mut out, &model.c)?;
    if let Some(u) = &model.basis {
        write_matrix_record(&mut out, u)?;
    }
    out.write_all(&(model.cost_trace.len() as u32).to_le_bytes())?;
    write_f64s(&mut out, &model.cost_trace)
}

pub fn read_model<R: Read>(mut input: R) -> Result<SpcaModel> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing SPCA magic".into()));
    }
    let version = read_u16(&mut input)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let p = read_u32(&mut input)? as usize;
    let q = read_u32(&mut input)? as usize;
    let sweeps = read_u32(&mut input)? as usize;
    let mut flags = [0u8; 2];
    input.read_exact(&mut flags)?;
    let b = read_dims_and_data(&mut input)?;
    let c = read_dims_and_data(&mut input)?;
    let basis = if flags[1] == 1 {
        Some(read_dims_and_data(&mut input)?)
    } else {
        None
    };
    if b.shape() != (p, q) || c.shape() != (q, p) || basis.as_ref().is_some_and(|u| u.shape() != (p, q)) {
        return Err(Error::Format("model matrices disagree with header dims".into()));
    }
    let len = read_u32(&mut input)? as usize;
    let cost_trace = read_f64s(&mut input, len)?;
    if cost_trace.is_empty() {
        return Err(Error::Format("empty cost trace".into()));
    }
    let mut model = SpcaModel::from_fit(b, c, cost_trace, sweeps, flags[0] == 1)?;
    model.basis = basis;
    Ok(model)
}

/// Path of the JSON config sidecar for a model file.
pub fn sidecar_path(model_path: &Path) -> PathBuf {
    let mut s = model_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_model(path: &Path, model: &SpcaModel, cfg: &SpcaConfig) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    fs::write(path, buf)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(SpcaModel, Option<SpcaConfig>)> {
    let model = read_model(fs::File::open(path)?)?;
    let side = sidecar_path(path);
    let cfg = if side.exists() {
        Some(serde_json::from_str(&fs::read_to_string(side)?)?)
    } else {
        None
    };
    Ok((model, cfg))
}
