//! In-memory sweep data: frames, tracking streams, and the per-sweep calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PixelGrid, Point3, RigidTransform, TimedPoseStream};

/// 8-bit grayscale raster, row-major with `v` as the row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> u8 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, value: u8) {
        self.data[v as usize * self.width as usize + u as usize] = value;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: u32,
    pub timestamp_ms: f64,
    pub image: GrayImage,
}

/// Tracked ultrasound sweep.
///
/// `probe` holds `T_OT<-US` (probe marker in tracker space) and `specimen`
/// holds `T_OT<-SM` (specimen marker in tracker space).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepBundle {
    pub grid: PixelGrid,
    /// Probe-marker fiducial centers in the probe-marker frame, mm.
    pub fiducials: Vec<Point3>,
    pub frames: Vec<Frame>,
    pub probe: TimedPoseStream,
    pub specimen: TimedPoseStream,
}

/// Spatial-temporal calibration plus the specimen-marker registration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// `T_US<-IP`: image plane (mm) to probe marker.
    pub image_to_probe: RigidTransform,
    /// Temporal offset added to frame timestamps before looking up poses.
    pub delta_t_ms: f64,
    pub rms_mm: f64,
    /// `T_CT<-SM`: specimen marker to CT.
    pub ct_from_specimen: RigidTransform,
}

impl SweepBundle {
    /// `T_CT<-US` at tracker time `t`.
    pub fn ct_from_probe_at(&self, t: f64, calib: &Calibration) -> Result<RigidTransform> {
        let probe = self.probe.interpolate(t)?;
        let specimen = self.specimen.interpolate(t)?;
        Ok(calib.ct_from_specimen.compose(&specimen.inverse()).compose(&probe))
    }

    /// `T_CT<-US` for a frame, evaluated at `timestamp + delta_t`.
    pub fn frame_pose(&self, frame: &Frame, calib: &Calibration) -> Result<RigidTransform> {
        self.ct_from_probe_at(frame.timestamp_ms + calib.delta_t_ms, calib)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        for f in &self.frames {
            if f.image.width != self.grid.width || f.image.height != self.grid.height {
                return Err(Error::domain(format!(
                    "frame {} is {}x{}, grid is {}x{}",
                    f.id, f.image.width, f.image.height, self.grid.width, self.grid.height
                )));
            }
        }
        Ok(())
    }
}

/// Which mutually exclusive outcome a frame had in the labeling pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameStatus {
    Accepted,
    Rejected,
    Skipped,
}
