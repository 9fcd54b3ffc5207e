//! Perturbs a synthetic sweep and measures how well refinement restores the labels.
//!
//! cargo run --release --example perturbation_recovery -- [frames] [speckle] [jitter_mm]

use std::time::Instant;

use bonelabel::geometry::EulerPose;
use bonelabel::labeler::{contour_distance_mm, final_label, refine_frame, FrameContext, LabelConfig, MeshIndex};
use bonelabel::phantom::{make_bone_mesh, perturb_tracking, synthesize_sweep, IntensityParams, MeshKind, NoiseParams, SweepLayout, SyntheticScene};
use rayon::prelude::*;

fn main() -> bonelabel::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let frames = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let speckle = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let jitter = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.0);

    let mesh = make_bone_mesh(MeshKind::BumpyTube, 100.0, 10.0, 1.0, 1)?;
    let layout = SweepLayout { frames, ..SweepLayout::default() };
    let intensity = IntensityParams { speckle_variance: speckle, ..IntensityParams::default() };
    let noise = NoiseParams { jitter_translation_mm: jitter, ..NoiseParams::default() };
    let scene = SyntheticScene::standard(mesh, &layout, intensity, noise, 7)?;
    let (bundle, truth) = synthesize_sweep(&scene)?;
    let (bundle, truth) = perturb_tracking(&bundle, &truth, 0.8, 0.8, 11)?;

    let cfg = LabelConfig::default();
    let index = MeshIndex::build(&scene.mesh, cfg.sample_density, cfg.sample_seed);
    let calib = truth.calibration;
    let t0 = Instant::now();
    let rows: Vec<(f64, f64, f64, bool)> = bundle
        .frames
        .par_iter()
        .zip(&truth.frames)
        .map(|(frame, ft)| {
            let pose = bundle.frame_pose(frame, &calib).unwrap();
            let ctx = FrameContext::new(frame.id, &frame.image, bundle.grid, &pose, calib.image_to_probe, bundle.fiducials.clone(), &index, cfg.gamma_mm, cfg.bound);
            let r = refine_frame(&ctx, cfg.lambda, &cfg.de, cfg.frame_seed(frame.id), 1.0).unwrap();
            let pre = final_label(&ctx, &index, &EulerPose::ZERO, &cfg).coords();
            let post = final_label(&ctx, &index, &r.epsilon, &cfg).coords();
            let d0 = contour_distance_mm(&pre, &ft.contour, &bundle.grid).unwrap_or(f64::NAN);
            let d1 = contour_distance_mm(&post, &ft.contour, &bundle.grid).unwrap_or(f64::NAN);
            (d0, d1, r.fiducial_correction_mm, r.accepted)
        })
        .collect();
    let n = rows.len() as f64;
    let pre = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let post = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let good = rows.iter().filter(|r| r.1 <= 0.2).count();
    let ok35 = rows.iter().filter(|r| r.1 <= 0.35).count();
    for (i, r) in rows.iter().enumerate().take(20) {
        println!("frame {i:3}: pre {:.3} mm  post {:.3} mm  correction {:.3} mm  accepted {}", r.0, r.1, r.2, r.3);
    }
    println!("mean pre {pre:.3} mm, mean post {post:.3} mm");
    println!("{good}/{} frames at or below 0.2 mm, {ok35} at or below 0.35 mm", rows.len());
    println!("{:.1} s", t0.elapsed().as_secs_f64());
    Ok(())
}
