//! Scores two label sets against truth masks at several tolerances, split by echo intensity.

use bonelabel::geometry::EulerPose;
use bonelabel::labeler::{final_label, rasterize_label, FrameContext, LabelConfig, MeshIndex};
use bonelabel::metrics::{evaluate, label_histogram, otsu_threshold, ClassFilter, FrameMask, IntensitySplit};
use bonelabel::phantom::{generate_phantom, PhantomConfig, SweepLayout};

fn main() -> bonelabel::Result<()> {
    let cfg = PhantomConfig {
        layout: SweepLayout { frames: 12, ..SweepLayout::default() },
        perturb_angle_deg: 0.8,
        perturb_trans_mm: 0.8,
        ..PhantomConfig::default()
    };
    let p = generate_phantom(&cfg, 2)?;
    let lc = LabelConfig::default();
    let index = MeshIndex::build(&p.mesh, lc.sample_density, lc.sample_seed);
    let calib = p.truth.calibration;
    let grid = p.bundle.grid;

    let truth: Vec<FrameMask> = p.bundle.frames.iter().zip(p.truth_masks()).map(|(f, mask)| FrameMask { frame_id: f.id, mask }).collect();
    let recorded: Vec<FrameMask> = p
        .bundle
        .frames
        .iter()
        .map(|f| {
            let pose = p.bundle.frame_pose(f, &calib)?;
            let ctx = FrameContext::new(f.id, &f.image, grid, &pose, calib.image_to_probe, p.bundle.fiducials.clone(), &index, lc.gamma_mm, lc.bound);
            Ok(FrameMask { frame_id: f.id, mask: rasterize_label(&final_label(&ctx, &index, &EulerPose::ZERO, &lc), &grid) })
        })
        .collect::<bonelabel::Result<_>>()?;
    let images: Vec<_> = p.bundle.frames.iter().map(|f| f.image.clone()).collect();
    let threshold = otsu_threshold(&label_histogram(truth.iter().map(|t| &t.mask).zip(&images)))?;
    println!("intensity threshold {threshold}");

    let report = evaluate(&recorded, &truth, &images, &grid, &[0.5, 1.0, 2.0], IntensitySplit { threshold })?;
    for class in ClassFilter::ALL {
        for sigma in &report.sigmas_mm {
            let a = report.aggregate_for(*sigma, class).expect("aggregate");
            let f = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.3}"));
            println!("{:>4} sigma {sigma}: acc {} com {} f {}", class.name(), f(a.accuracy), f(a.completeness), f(a.f1));
        }
    }
    Ok(())
}
