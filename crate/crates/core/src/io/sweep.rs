use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PixelGrid, Point3, TimedPoseStream};
use crate::io::image::{load_gray_png, save_gray_png};
use crate::io::{pose_from, read_json, read_jsonl, write_json, write_jsonl, MIN_DELTA_T_MS};
use crate::sweep::{Frame, SweepBundle};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Serialize, Deserialize)]
struct SweepJson {
    schema_version: String,
    width: u32,
    height: u32,
    sx_mm: f64,
    sy_mm: f64,
    fiducials_mm: Vec<[f64; 3]>,
    frames: Vec<FrameJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameJson {
    id: u32,
    timestamp_ms: f64,
    image: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Marker {
    Probe,
    Specimen,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackingRecord {
    timestamp_ms: f64,
    marker: Marker,
    pose: [f64; 16],
}

fn frame_file(id: u32) -> String {
    format!("frames/{id:06}.png")
}

/// Writes `sweep.json`, `frames/*.png` and `tracking.jsonl` under `dir`.
pub fn save_sweep(bundle: &SweepBundle, dir: &Path) -> Result<()> {
    bundle.validate()?;
    std::fs::create_dir_all(dir.join("frames"))?;
    let meta = SweepJson {
        schema_version: SCHEMA_VERSION.into(),
        width: bundle.grid.width,
        height: bundle.grid.height,
        sx_mm: bundle.grid.sx,
        sy_mm: bundle.grid.sy,
        fiducials_mm: bundle.fiducials.iter().map(|p| [p.x, p.y, p.z]).collect(),
        frames: bundle
            .frames
            .iter()
            .map(|f| FrameJson {
                id: f.id,
                timestamp_ms: f.timestamp_ms,
                image: frame_file(f.id),
            })
            .collect(),
    };
    for f in &bundle.frames {
        save_gray_png(&dir.join(frame_file(f.id)), &f.image)?;
    }
    write_json(&dir.join("sweep.json"), &meta)?;
    let rows = bundle
        .probe
        .samples()
        .iter()
        .map(|(t, p)| (Marker::Probe, t, p))
        .chain(bundle.specimen.samples().iter().map(|(t, p)| (Marker::Specimen, t, p)))
        .map(|(marker, t, p)| TrackingRecord {
            timestamp_ms: *t,
            marker,
            pose: p.to_row_major(),
        });
    write_jsonl(&dir.join("tracking.jsonl"), rows)
}

/// Reads a sweep directory written by [`save_sweep`].
pub fn load_sweep(dir: &Path) -> Result<SweepBundle> {
    let meta_path = dir.join("sweep.json");
    let meta: SweepJson = read_json(&meta_path)?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema {
            path: meta_path,
            msg: format!("version {:?}, expected {SCHEMA_VERSION:?}", meta.schema_version),
        });
    }
    let grid = PixelGrid::new(meta.width, meta.height, meta.sx_mm, meta.sy_mm).map_err(|e| Error::format(&meta_path, e.to_string()))?;
    let mut frames = Vec::with_capacity(meta.frames.len());
    for f in &meta.frames {
        let path = dir.join(&f.image);
        let image = load_gray_png(&path).map_err(|e| match e {
            Error::MissingFile { path, .. } => Error::MissingFile {
                path,
                what: format!("image of frame {}", f.id),
            },
            e => e,
        })?;
        if image.width != grid.width || image.height != grid.height {
            return Err(Error::DimensionMismatch {
                path,
                expected: format!("{}x{}", grid.width, grid.height),
                found: format!("{}x{} (frame {})", image.width, image.height, f.id),
            });
        }
        frames.push(Frame {
            id: f.id,
            timestamp_ms: f.timestamp_ms,
            image,
        });
    }

    let tracking_path = dir.join("tracking.jsonl");
    let records: Vec<TrackingRecord> = read_jsonl(&tracking_path)?;
    let mut probe = Vec::new();
    let mut specimen = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let pose = pose_from(&tracking_path, &format!("record {} pose", i + 1), &r.pose)?;
        match r.marker {
            Marker::Probe => probe.push((r.timestamp_ms, pose)),
            Marker::Specimen => specimen.push((r.timestamp_ms, pose)),
        }
    }
    let stream = |s: Vec<_>, name: &str| {
        TimedPoseStream::new(s).map_err(|e| Error::format(&tracking_path, format!("{name} stream: {e}")))
    };
    let probe = stream(probe, "probe")?;
    let specimen = stream(specimen, "specimen")?;
    if let (Some(first), Some(last)) = (
        frames.iter().map(|f| f.timestamp_ms).reduce(f64::min),
        frames.iter().map(|f| f.timestamp_ms).reduce(f64::max),
    ) {
        let (need_start, need_end) = (first + MIN_DELTA_T_MS, last);
        for (name, s) in [("probe", &probe), ("specimen", &specimen)] {
            if s.start() > need_start || s.end() < need_end {
                return Err(Error::format(
                    &tracking_path,
                    format!(
                        "{name} stream covers [{}, {}] ms, frames need [{need_start}, {need_end}] ms",
                        s.start(),
                        s.end()
                    ),
                ));
            }
        }
    }
    Ok(SweepBundle {
        grid,
        fiducials: meta.fiducials_mm.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect(),
        frames,
        probe,
        specimen,
    })
}
