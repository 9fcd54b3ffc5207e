use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationObservation, FiducialRegistration, ObservedFrame};
use crate::error::{Error, Result};
use crate::geometry::{EulerPose, PixelGrid, Point3, TimedPoseStream};
use crate::io::image::{load_mask_png, save_mask_png};
use crate::io::sweep::SCHEMA_VERSION;
use crate::io::{pose_from, read_json, read_jsonl, write_json, write_jsonl};
use crate::labeler::{IntensityClass, LabelMask, LabelSummary, PerturbationResult};
use crate::phantom::{FrameTruth, SweepGroundTruth};
use crate::sweep::Calibration;

fn check_schema(path: &Path, v: &str) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            msg: format!("version {v:?}, expected {SCHEMA_VERSION:?}"),
        });
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationJson {
    schema_version: String,
    image_to_probe: [f64; 16],
    delta_t_ms: f64,
    rms_mm: f64,
    ct_from_specimen: [f64; 16],
}

impl CalibrationJson {
    fn from(c: &Calibration) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            image_to_probe: c.image_to_probe.to_row_major(),
            delta_t_ms: c.delta_t_ms,
            rms_mm: c.rms_mm,
            ct_from_specimen: c.ct_from_specimen.to_row_major(),
        }
    }

    fn to(&self, path: &Path) -> Result<Calibration> {
        check_schema(path, &self.schema_version)?;
        Ok(Calibration {
            image_to_probe: pose_from(path, "image_to_probe", &self.image_to_probe)?,
            delta_t_ms: self.delta_t_ms,
            rms_mm: self.rms_mm,
            ct_from_specimen: pose_from(path, "ct_from_specimen", &self.ct_from_specimen)?,
        })
    }
}

pub fn save_calibration(path: &Path, c: &Calibration) -> Result<()> {
    write_json(path, &CalibrationJson::from(c))
}

pub fn load_calibration(path: &Path) -> Result<Calibration> {
    read_json::<CalibrationJson>(path)?.to(path)
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthFrameJson {
    frame_id: u32,
    ct_from_probe: [f64; 16],
    injected: [f64; 6],
    contour: Vec<(u32, u32)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthJson {
    schema_version: String,
    calibration: CalibrationJson,
    frames: Vec<TruthFrameJson>,
}

pub fn save_ground_truth(path: &Path, truth: &SweepGroundTruth) -> Result<()> {
    write_json(
        path,
        &GroundTruthJson {
            schema_version: SCHEMA_VERSION.into(),
            calibration: CalibrationJson::from(&truth.calibration),
            frames: truth
                .frames
                .iter()
                .map(|f| TruthFrameJson {
                    frame_id: f.frame_id,
                    ct_from_probe: f.ct_from_probe.to_row_major(),
                    injected: f.injected.to_array(),
                    contour: f.contour.clone(),
                })
                .collect(),
        },
    )
}

pub fn load_ground_truth(path: &Path) -> Result<SweepGroundTruth> {
    let g: GroundTruthJson = read_json(path)?;
    check_schema(path, &g.schema_version)?;
    let frames = g
        .frames
        .iter()
        .map(|f| {
            Ok(FrameTruth {
                frame_id: f.frame_id,
                ct_from_probe: pose_from(path, &format!("frame {} ct_from_probe", f.frame_id), &f.ct_from_probe)?,
                injected: EulerPose::from_array(&f.injected),
                contour: f.contour.clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepGroundTruth {
        frames,
        calibration: g.calibration.to(path)?,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseSampleJson {
    timestamp_ms: f64,
    pose: [f64; 16],
}

#[derive(Debug, Serialize, Deserialize)]
struct RegistrationJson {
    source_mm: Vec<[f64; 3]>,
    target_mm: Vec<[f64; 3]>,
    init: [f64; 16],
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibObsJson {
    schema_version: String,
    width: u32,
    height: u32,
    sx_mm: f64,
    sy_mm: f64,
    frames: Vec<ObservedFrame>,
    probe: Vec<PoseSampleJson>,
    phantom: Vec<PoseSampleJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    specimen_registration: Option<RegistrationJson>,
}

fn pts(p: &[Point3]) -> Vec<[f64; 3]> {
    p.iter().map(|p| [p.x, p.y, p.z]).collect()
}

fn unpts(p: &[[f64; 3]]) -> Vec<Point3> {
    p.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()
}

fn samples(s: &TimedPoseStream) -> Vec<PoseSampleJson> {
    s.samples()
        .iter()
        .map(|(t, p)| PoseSampleJson {
            timestamp_ms: *t,
            pose: p.to_row_major(),
        })
        .collect()
}

fn stream(path: &Path, name: &str, s: &[PoseSampleJson]) -> Result<TimedPoseStream> {
    let v = s
        .iter()
        .enumerate()
        .map(|(i, r)| Ok((r.timestamp_ms, pose_from(path, &format!("{name}[{i}]"), &r.pose)?)))
        .collect::<Result<_>>()?;
    TimedPoseStream::new(v).map_err(|e| Error::format(path, format!("{name}: {e}")))
}

/// Calibration recording plus, optionally, the specimen-marker fiducial registration problem.
pub fn save_calib_obs(path: &Path, obs: &CalibrationObservation, registration: Option<&FiducialRegistration>) -> Result<()> {
    write_json(
        path,
        &CalibObsJson {
            schema_version: SCHEMA_VERSION.into(),
            width: obs.grid.width,
            height: obs.grid.height,
            sx_mm: obs.grid.sx,
            sy_mm: obs.grid.sy,
            frames: obs.frames.clone(),
            probe: samples(&obs.probe),
            phantom: samples(&obs.phantom),
            specimen_registration: registration.map(|r| RegistrationJson {
                source_mm: pts(&r.source),
                target_mm: pts(&r.target),
                init: r.init.to_row_major(),
            }),
        },
    )
}

pub fn load_calib_obs(path: &Path) -> Result<(CalibrationObservation, Option<FiducialRegistration>)> {
    let o: CalibObsJson = read_json(path)?;
    check_schema(path, &o.schema_version)?;
    let grid = PixelGrid::new(o.width, o.height, o.sx_mm, o.sy_mm).map_err(|e| Error::format(path, e.to_string()))?;
    let obs = CalibrationObservation {
        grid,
        frames: o.frames,
        probe: stream(path, "probe", &o.probe)?,
        phantom: stream(path, "phantom", &o.phantom)?,
    };
    let reg = o
        .specimen_registration
        .map(|r| {
            Ok::<_, Error>(FiducialRegistration {
                source: unpts(&r.source_mm),
                target: unpts(&r.target_mm),
                init: pose_from(path, "specimen_registration.init", &r.init)?,
            })
        })
        .transpose()?;
    Ok((obs, reg))
}

pub fn save_refinement(path: &Path, results: &[PerturbationResult]) -> Result<()> {
    write_jsonl(path, results)
}

pub fn load_refinement(path: &Path) -> Result<Vec<PerturbationResult>> {
    read_jsonl(path)
}

pub fn save_summary(path: &Path, summary: &LabelSummary) -> Result<()> {
    write_json(path, summary)
}

pub fn load_summary(path: &Path) -> Result<LabelSummary> {
    read_json(path)
}

pub fn mask_file_name(frame_id: u32) -> String {
    format!("{frame_id:06}.png")
}

/// One PNG per frame in `dir`, named by frame id.
pub fn save_masks(dir: &Path, masks: &[(u32, &LabelMask)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (id, m) in masks {
        save_mask_png(&dir.join(mask_file_name(*id)), m)?;
    }
    Ok(())
}

pub fn load_masks(dir: &Path, frame_ids: &[u32]) -> Result<Vec<LabelMask>> {
    frame_ids.iter().map(|id| load_mask_png(&dir.join(mask_file_name(*id)))).collect()
}

/// Settings that produced a label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the canonical labeling config JSON.
    pub config_hash: String,
    pub seed: u64,
    pub gamma_mm: f64,
    pub lambda: f64,
    pub alpha_max_deg: f64,
    pub intensity_threshold: Option<u8>,
}

/// Horizontal run of labeled pixels `u_start..=u_end` on row `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRun {
    pub frame_id: u32,
    pub v: u32,
    pub u_start: u32,
    pub u_end: u32,
    pub alpha_deg: Vec<f64>,
    pub class: Vec<Option<IntensityClass>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LabelRecord {
    Provenance(Provenance),
    Run(LabelRun),
}

fn runs(frame_id: u32, m: &LabelMask) -> Vec<LabelRun> {
    let w = m.width as usize;
    let mut out = Vec::new();
    for v in 0..m.height as usize {
        let mut u = 0;
        while u < w {
            if !m.bits[v * w + u] {
                u += 1;
                continue;
            }
            let start = u;
            while u < w && m.bits[v * w + u] {
                u += 1;
            }
            let idx = v * w + start..v * w + u;
            out.push(LabelRun {
                frame_id,
                v: v as u32,
                u_start: start as u32,
                u_end: (u - 1) as u32,
                alpha_deg: m.alpha_deg[idx.clone()].to_vec(),
                class: m.class[idx].to_vec(),
            });
        }
    }
    out
}

/// `labels.jsonl`: a provenance record followed by every run of every mask.
pub fn save_label_runs(path: &Path, provenance: &Provenance, masks: &[(u32, &LabelMask)]) -> Result<()> {
    let records = std::iter::once(LabelRecord::Provenance(provenance.clone()))
        .chain(masks.iter().flat_map(|(id, m)| runs(*id, m)).map(LabelRecord::Run));
    write_jsonl(path, records)
}

pub fn load_label_runs(path: &Path) -> Result<(Provenance, Vec<LabelRun>)> {
    let mut records = read_jsonl::<LabelRecord>(path)?.into_iter();
    let Some(LabelRecord::Provenance(p)) = records.next() else {
        return Err(Error::format(path, "first record must be the provenance block"));
    };
    let mut out = Vec::new();
    for r in records {
        match r {
            LabelRecord::Run(run) => {
                let n = (run.u_end as usize + 1).saturating_sub(run.u_start as usize);
                if run.u_end < run.u_start || run.alpha_deg.len() != n || run.class.len() != n {
                    return Err(Error::format(path, format!("malformed run in frame {} row {}", run.frame_id, run.v)));
                }
                out.push(run);
            }
            LabelRecord::Provenance(_) => return Err(Error::format(path, "duplicate provenance block")),
        }
    }
    Ok((p, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{default_calibration_recording, specimen_registration};
    use crate::sweep::FrameStatus;

    fn calib() -> Calibration {
        Calibration {
            image_to_probe: EulerPose::new([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]).to_transform(),
            delta_t_ms: -33.4,
            rms_mm: 0.0123,
            ct_from_specimen: EulerPose::new([0.1, -0.2, 30.0], [-1.0, 0.5, 9.0]).to_transform(),
        }
    }

    #[test]
    fn calibration_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("calibration.json");
        save_calibration(&p, &calib()).unwrap();
        assert_eq!(load_calibration(&p).unwrap(), calib());
    }

    #[test]
    fn non_rigid_pose_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("calibration.json");
        save_calibration(&p, &calib()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        v["image_to_probe"][0] = serde_json::json!(3.0);
        std::fs::write(&p, v.to_string()).unwrap();
        let e = load_calibration(&p).unwrap_err().to_string();
        assert!(e.contains("image_to_probe"), "{e}");
    }

    #[test]
    fn ground_truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ground_truth.json");
        let t = SweepGroundTruth {
            frames: vec![FrameTruth {
                frame_id: 4,
                ct_from_probe: calib().image_to_probe,
                injected: EulerPose::new([0.1, 0.2, -0.3], [0.4, -0.5, 0.6]),
                contour: vec![(0, 9), (1, 10)],
            }],
            calibration: calib(),
        };
        save_ground_truth(&p, &t).unwrap();
        assert_eq!(load_ground_truth(&p).unwrap(), t);
    }

    #[test]
    fn calib_obs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("calib_obs.json");
        let mut obs = default_calibration_recording(3, -33.4).unwrap();
        obs.frames.truncate(5);
        let reg = specimen_registration(&calib().ct_from_specimen, 1);
        save_calib_obs(&p, &obs, Some(&reg)).unwrap();
        let (o, r) = load_calib_obs(&p).unwrap();
        assert_eq!(o, obs);
        assert_eq!(r.unwrap(), reg);
    }

    #[test]
    fn refinement_and_summary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = PerturbationResult::skipped(3, 9, "empty initial intersection");
        r.epsilon = EulerPose::new([0.1, 0.0, 0.0], [0.0, 0.3, 0.0]);
        let mut a = r.clone();
        a.status = FrameStatus::Accepted;
        a.reason = None;
        let p = dir.path().join("refinement.jsonl");
        save_refinement(&p, &[r.clone(), a.clone()]).unwrap();
        assert_eq!(load_refinement(&p).unwrap(), vec![r.clone(), a.clone()]);
        let s = LabelSummary::from_results(&[r, a]);
        let sp = dir.path().join("summary.json");
        save_summary(&sp, &s).unwrap();
        assert_eq!(load_summary(&sp).unwrap(), s);
    }

    #[test]
    fn label_runs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = LabelMask::empty(6, 3);
        for u in [1, 2, 3, 5] {
            m.set(u, 1, true);
            m.alpha_deg[6 + u as usize] = u as f64 * 10.0;
            m.class[6 + u as usize] = Some(IntensityClass::High);
        }
        let prov = Provenance {
            config_hash: "ab".into(),
            seed: 1,
            gamma_mm: 0.3,
            lambda: 0.1,
            alpha_max_deg: 85.0,
            intensity_threshold: Some(90),
        };
        let p = dir.path().join("labels.jsonl");
        save_label_runs(&p, &prov, &[(7, &m)]).unwrap();
        let (pr, runs) = load_label_runs(&p).unwrap();
        assert_eq!(pr, prov);
        assert_eq!(runs.len(), 2);
        assert_eq!((runs[0].u_start, runs[0].u_end, runs[0].v), (1, 3, 1));
        assert_eq!(runs[0].alpha_deg, vec![10.0, 20.0, 30.0]);
        assert_eq!((runs[1].u_start, runs[1].u_end), (5, 5));
    }

    #[test]
    fn masks_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = LabelMask::empty(3, 3);
        m.set(1, 2, true);
        save_masks(dir.path(), &[(12, &m)]).unwrap();
        assert!(dir.path().join("000012.png").exists());
        assert_eq!(load_masks(dir.path(), &[12]).unwrap()[0].pixels(), vec![(1, 2)]);
        assert!(matches!(load_masks(dir.path(), &[13]), Err(Error::MissingFile { .. })));
    }
}
