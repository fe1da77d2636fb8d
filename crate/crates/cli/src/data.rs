use crate::config::DataConfig;
use anyhow::Result;
use sgprop_core::envs::{load_idx_dataset, synthetic_digits, Dataset};
use sgprop_core::rng::seeded;
use std::path::PathBuf;

pub const IMAGES: &str = "train-images-idx3-ubyte";
pub const LABELS: &str = "train-labels-idx1-ubyte";

/// The dataset plus a short description of where it came from.
pub fn resolve(cfg: &DataConfig) -> Result<(Dataset, String)> {
    let dir = cfg.dir.clone().or_else(|| std::env::var_os("SGPROP_DATA").map(PathBuf::from));
    if let Some(dir) = dir {
        let (img, lab) = (dir.join(IMAGES), dir.join(LABELS));
        if img.is_file() && lab.is_file() {
            let data = load_idx_dataset(&img, &lab, 10)?;
            return Ok((data, format!("idx:{}", dir.display())));
        }
        eprintln!("warning: {} lacks {IMAGES}/{LABELS}; using synthetic digits", dir.display());
    } else {
        eprintln!("warning: SGPROP_DATA not set; using synthetic digits");
    }
    let data = synthetic_digits(cfg.synthetic_per_class, cfg.synthetic_noise, &mut seeded(cfg.synthetic_seed));
    Ok((data, format!("synthetic:{}x10", cfg.synthetic_per_class)))
}
