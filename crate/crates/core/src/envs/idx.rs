//! IDX containers (big-endian header, unsigned-byte payload).

use super::Dataset;
use crate::error::{bail, Result};
use std::path::Path;

pub const MAGIC_LABELS: u32 = 0x0000_0801;
pub const MAGIC_IMAGES: u32 = 0x0000_0803;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        bail!(Format, "truncated header");
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let ndim = match magic {
        MAGIC_LABELS => 1,
        MAGIC_IMAGES => 3,
        m => bail!(Format, "unsupported IDX magic {m:#010x}"),
    };
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        bail!(Format, "truncated header");
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    match len {
        Some(n) if bytes.len() - header >= n => Ok(IdxArray { dims, data: bytes[header..header + n].to_vec() }),
        _ => bail!(Format, "payload shorter than header dims {dims:?}"),
    }
}

/// Image/label pair as a dataset with pixels scaled to `[0,1]`.
pub fn load_idx_dataset(images: &Path, labels: &Path, classes: usize) -> Result<Dataset> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| crate::Error::Input(format!("{}: {e}", p.display())));
    let img = parse_idx(&read(images)?)?;
    let lab = parse_idx(&read(labels)?)?;
    if img.dims.len() != 3 || lab.dims.len() != 1 || img.dims[0] != lab.dims[0] {
        bail!(Format, "image dims {:?} do not match label dims {:?}", img.dims, lab.dims);
    }
    let px = img.dims[1] * img.dims[2];
    let contexts = img.data.chunks_exact(px).map(|c| c.iter().map(|&b| f64::from(b) / 255.0).collect()).collect();
    Dataset::new(contexts, lab.data.iter().map(|&l| l as usize).collect(), classes)
}
