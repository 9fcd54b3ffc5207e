//! On-disk formats: PNG frames and masks, JSON/JSONL records, ASCII PLY meshes.

mod artifacts;
mod image;
mod lock;
mod ply;
mod sweep;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

pub use artifacts::{
    load_calib_obs, load_calibration, load_ground_truth, load_label_runs, load_masks, load_refinement, load_summary, mask_file_name,
    save_calib_obs, save_calibration, save_ground_truth, save_label_runs, save_masks, save_refinement, save_summary, LabelRecord,
    LabelRun, Provenance,
};
pub use image::{load_gray_png, load_mask_png, save_gray_png, save_mask_png, save_rgb_png};
pub use lock::DirLock;
pub use ply::{load_mesh, parse_ply, save_mesh};
pub use sweep::{load_sweep, save_sweep, SCHEMA_VERSION};

/// Lowest temporal offset a sweep's tracking must cover, ms.
pub const MIN_DELTA_T_MS: f64 = -300.0;

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| missing_or_io(path, e, "json"))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::format(path, e.to_string()))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| missing_or_io(path, e, "jsonl"))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn missing_or_io(path: &Path, e: std::io::Error, what: &str) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::MissingFile {
            path: path.to_path_buf(),
            what: what.to_string(),
        }
    } else {
        Error::Io(e)
    }
}

pub(crate) fn pose_from(path: &Path, field: &str, m: &[f64; 16]) -> Result<RigidTransform> {
    RigidTransform::from_row_major(m).map_err(|e| Error::format(path, format!("{field}: {e}")))
}
