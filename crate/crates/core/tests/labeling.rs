use bonelabel::labeler::{contour_distance_mm, label_centerline, label_sweep, LabelConfig, MeshIndex};
use bonelabel::phantom::{generate_phantom, PhantomConfig, SweepLayout};
use bonelabel::sweep::FrameStatus;

fn config(frames: usize, perturb: f64) -> PhantomConfig {
    PhantomConfig {
        layout: SweepLayout { frames, ..SweepLayout::default() },
        perturb_angle_deg: perturb,
        perturb_trans_mm: perturb,
        ..PhantomConfig::default()
    }
}

#[test]
fn exact_tracking_is_always_accepted() {
    let p = generate_phantom(&config(24, 0.0), 2).unwrap();
    let cfg = LabelConfig::default();
    let index = MeshIndex::build(&p.mesh, cfg.sample_density, cfg.sample_seed);
    let out = label_sweep(&p.bundle, &index, &p.truth.calibration, &cfg).unwrap();
    assert_eq!(out.summary.accepted, 24, "{:?}", out.summary);
    assert!(out.results.iter().all(|r| r.fiducial_correction_mm <= 1.0));
}

#[test]
fn refined_sweep_labels_track_the_contour() {
    let p = generate_phantom(&config(16, 0.8), 4).unwrap();
    let cfg = LabelConfig::default();
    let index = MeshIndex::build(&p.mesh, cfg.sample_density, cfg.sample_seed);
    let out = label_sweep(&p.bundle, &index, &p.truth.calibration, &cfg).unwrap();
    assert_eq!(out.masks.len(), 16);
    for ((m, r), t) in out.masks.iter().zip(&out.results).zip(&p.truth.frames) {
        match r.status {
            FrameStatus::Accepted => {
                assert!(m.count() > 0);
                assert!(m.provenance.refined);
                let d = contour_distance_mm(&m.pixels(), &t.contour, &p.bundle.grid).unwrap();
                assert!(d <= 0.35, "frame {} at {d} mm", r.frame_id);
                assert!(!label_centerline(&m.pixels()).is_empty());
            }
            _ => assert_eq!(m.count(), 0),
        }
    }
    assert!(out.summary.accepted >= 12, "{:?}", out.summary);
}
