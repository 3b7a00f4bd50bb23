//! Flat binary tensor layout.
//!
//! `<stem>.f64` holds little-endian 8-byte floats in C order, `<stem>.mask`
//! holds the mask as packed bits (LSB first within each byte) and
//! `<stem>.json` describes kind, shape, channels and time index.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DynamicsKind, DynamicsTensor, TimeIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: DynamicsKind,
    pub shape: Vec<usize>,
    pub channels: Vec<String>,
    pub time_index: TimeIndex,
    pub dtype: String,
    pub byte_order: String,
    pub mask_bits: String,
}

pub fn pack_bits(mask: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; mask.len().div_ceil(8)];
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

pub fn unpack_bits(bytes: &[u8], len: usize) -> Vec<bool> {
    (0..len).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf, PathBuf) {
    (dir.join(format!("{stem}.f64")), dir.join(format!("{stem}.mask")), dir.join(format!("{stem}.json")))
}

pub fn write_f64_le(values: &[f64], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_tensor(tensor: &DynamicsTensor, dir: &Path, stem: &str) -> Result<Sidecar> {
    fs::create_dir_all(dir)?;
    let (data, mask, meta) = paths(dir, stem);
    write_f64_le(tensor.data(), &data)?;
    fs::write(mask, pack_bits(tensor.mask()))?;
    let sidecar = Sidecar {
        kind: tensor.kind(),
        shape: tensor.shape().to_vec(),
        channels: tensor.channel_names().to_vec(),
        time_index: *tensor.time_index(),
        dtype: "f64".into(),
        byte_order: "little".into(),
        mask_bits: "lsb0".into(),
    };
    fs::write(meta, serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(sidecar)
}

pub fn import_tensor(dir: &Path, stem: &str) -> Result<DynamicsTensor> {
    let (data, mask, meta) = paths(dir, stem);
    let sidecar: Sidecar = serde_json::from_slice(&fs::read(meta)?)?;
    let cells: usize = sidecar.shape.iter().product();
    let raw = fs::read(data)?;
    if raw.len() != cells * 8 {
        return Err(Error::ShapeMismatch(format!("expected {} data bytes, found {}", cells * 8, raw.len())));
    }
    let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let bits = fs::read(mask)?;
    if bits.len() != cells.div_ceil(8) {
        return Err(Error::ShapeMismatch(format!("mask has {} bytes for {cells} cells", bits.len())));
    }
    let n = sidecar.shape.len();
    DynamicsTensor::new(
        sidecar.kind,
        &sidecar.shape[1..n - 1],
        sidecar.channels,
        sidecar.time_index,
        values,
        unpack_bits(&bits, cells),
    )
}
