//! Recovers the image-to-marker transform and the temporal offset from a synthetic recording,
//! then registers the specimen marker to its CT fiducials.

use bonelabel::calibration::{joint_calibrate, OffsetGrid};
use bonelabel::geometry::EulerPose;
use bonelabel::phantom::scene::default_image_to_probe;
use bonelabel::phantom::{specimen_registration, synthesize_calibration, CalibrationScenario};

fn main() -> bonelabel::Result<()> {
    let sc = CalibrationScenario {
        delta_t_ms: -87.3,
        landmark_noise_px: 0.5,
        ..CalibrationScenario::default()
    };
    let (obs, truth) = synthesize_calibration(&sc, &default_image_to_probe())?;
    let r = joint_calibrate(&obs, &OffsetGrid::default())?;
    let err = r.image_to_probe.inverse().compose(&truth);
    println!("delta_t {:.1} ms (true {})", r.delta_t_ms, sc.delta_t_ms);
    println!("rms {:.4} mm, residual rotation {:.4} deg, translation {:.4} mm", r.localization_error_mm, err.rotation_angle_deg(), err.translation().norm());

    let ct_from_specimen = EulerPose::new([12.0, -4.0, 7.0], [80.0, 20.0, -15.0]).to_transform();
    let icp = specimen_registration(&ct_from_specimen, 3).solve()?;
    println!("specimen registration: {} iterations, rms {:e} mm", icp.iterations, icp.rms_mm);
    Ok(())
}
