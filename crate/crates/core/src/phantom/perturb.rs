use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{EulerPose, TimedPoseStream};
use crate::phantom::scene::SweepGroundTruth;
use crate::sweep::SweepBundle;

/// Draws one perturbation per frame, uniform in `[-max_angle, max_angle]^3 x [-max_trans, max_trans]^3`,
/// and bakes it into the recorded probe stream. See [`apply_perturbations`].
pub fn perturb_tracking(
    bundle: &SweepBundle,
    truth: &SweepGroundTruth,
    max_angle_deg: f64,
    max_trans_mm: f64,
    seed: u64,
) -> Result<(SweepBundle, SweepGroundTruth)> {
    if !(max_angle_deg >= 0.0 && max_trans_mm >= 0.0) {
        return Err(Error::domain("perturbation magnitudes must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |m: f64| {
        let u: f64 = rng.random();
        if m == 0.0 {
            0.0
        } else {
            m * (2.0 * u - 1.0)
        }
    };
    let eps: Vec<EulerPose> = bundle
        .frames
        .iter()
        .map(|_| {
            let a = [draw(max_angle_deg), draw(max_angle_deg), draw(max_angle_deg)];
            let d = [draw(max_trans_mm), draw(max_trans_mm), draw(max_trans_mm)];
            EulerPose::new(a, d)
        })
        .collect();
    apply_perturbations(bundle, truth, &eps)
}

/// Replaces the probe sample at each frame's lookup time `t + delta_t` so that the
/// recorded `T_CT<-US`, read as Euler parameters, is offset by `eps[f]`.
/// A sample is inserted (by interpolation) when none sits exactly at that time.
pub fn apply_perturbations(
    bundle: &SweepBundle,
    truth: &SweepGroundTruth,
    eps: &[EulerPose],
) -> Result<(SweepBundle, SweepGroundTruth)> {
    if eps.len() != bundle.frames.len() || truth.frames.len() != bundle.frames.len() {
        return Err(Error::domain("one perturbation and one truth record per frame required"));
    }
    let calib = truth.calibration;
    let mut out = bundle.clone();
    let mut out_truth = truth.clone();
    let tracker_from_ct = calib.ct_from_specimen.inverse();
    for (f, e) in eps.iter().enumerate() {
        if *e == EulerPose::ZERO {
            continue;
        }
        let t = bundle.frames[f].timestamp_ms + calib.delta_t_ms;
        let recorded = out.ct_from_probe_at(t, &calib)?;
        let specimen = out.specimen.interpolate(t)?;
        let shifted = EulerPose::from_transform(&recorded).offset(e).to_transform();
        let probe = specimen.compose(&tracker_from_ct).compose(&shifted);
        out.probe = with_sample(&out.probe, t, probe)?;
        let prior = out_truth.frames[f].injected;
        out_truth.frames[f].injected = prior.offset(e);
    }
    Ok((out, out_truth))
}

fn with_sample(stream: &TimedPoseStream, t: f64, pose: crate::geometry::RigidTransform) -> Result<TimedPoseStream> {
    let samples = stream.samples();
    let i = samples.partition_point(|(s, _)| *s < t);
    let mut v = samples.to_vec();
    if i < v.len() && v[i].0 == t {
        v[i].1 = pose;
    } else {
        v.insert(i, (t, pose));
    }
    TimedPoseStream::new(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{make_bone_mesh, synthesize_sweep, IntensityParams, MeshKind, NoiseParams, SweepLayout, SyntheticScene};

    fn sweep() -> (SweepBundle, SweepGroundTruth) {
        let mesh = make_bone_mesh(MeshKind::Cylinder, 100.0, 10.0, 0.0, 0).unwrap();
        let layout = SweepLayout {
            frames: 6,
            width: 32,
            height: 32,
            pixel_mm: 1.0,
            ..SweepLayout::default()
        };
        let scene = SyntheticScene::standard(mesh, &layout, IntensityParams::default(), NoiseParams::default(), 5).unwrap();
        synthesize_sweep(&scene).unwrap()
    }

    #[test]
    fn zero_magnitude_leaves_bundle_unchanged() {
        let (b, t) = sweep();
        let (b2, t2) = perturb_tracking(&b, &t, 0.0, 0.0, 9).unwrap();
        assert_eq!(b, b2);
        assert!(t2.frames.iter().all(|f| f.injected == EulerPose::ZERO));
    }

    #[test]
    fn seeded_and_bounded() {
        let (b, t) = sweep();
        let (b1, t1) = perturb_tracking(&b, &t, 0.8, 0.8, 3).unwrap();
        let (b2, t2) = perturb_tracking(&b, &t, 0.8, 0.8, 3).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(t1, t2);
        for f in &t1.frames {
            assert!(f.injected.max_abs_translation() <= 0.8);
            assert!(f.injected.max_abs_angle() <= 0.8);
            assert!(f.injected != EulerPose::ZERO);
        }
    }

    #[test]
    fn recorded_pose_carries_the_injected_offset() {
        let (b, t) = sweep();
        let (b1, t1) = perturb_tracking(&b, &t, 0.8, 0.8, 4).unwrap();
        let calib = t.calibration;
        for (frame, ft) in b1.frames.iter().zip(&t1.frames) {
            let recorded = EulerPose::from_transform(&b1.frame_pose(frame, &calib).unwrap()).to_array();
            let truth = EulerPose::from_transform(&ft.ct_from_probe).to_array();
            let inj = ft.injected.to_array();
            for k in 0..6 {
                assert!((recorded[k] - truth[k] - inj[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn off_grid_lookup_inserts_a_sample() {
        let (mut b, t) = sweep();
        b.frames[0].timestamp_ms += 3.0;
        let n = b.probe.len();
        let mut eps = vec![EulerPose::ZERO; b.frames.len()];
        eps[0] = EulerPose::new([0.0; 3], [0.5, 0.0, 0.0]);
        let (b1, _) = apply_perturbations(&b, &t, &eps).unwrap();
        assert_eq!(b1.probe.len(), n + 1);
    }
}
