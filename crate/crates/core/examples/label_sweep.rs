//! Labels a perturbed synthetic sweep and compares initial and refined labels with the true contour.

use bonelabel::labeler::{contour_distance_mm, initial_labels, label_sweep, LabelConfig, MeshIndex};
use bonelabel::phantom::{generate_phantom, PhantomConfig, SweepLayout};

fn main() -> bonelabel::Result<()> {
    let cfg = PhantomConfig {
        layout: SweepLayout { frames: 24, ..SweepLayout::default() },
        perturb_angle_deg: 0.8,
        perturb_trans_mm: 0.8,
        ..PhantomConfig::default()
    };
    let p = generate_phantom(&cfg, 5)?;
    let lc = LabelConfig::default();
    let index = MeshIndex::build(&p.mesh, lc.sample_density, lc.sample_seed);
    let calib = p.truth.calibration;
    let labels = label_sweep(&p.bundle, &index, &calib, &lc)?;
    let initial = initial_labels(&p.bundle, &index, &calib, &lc)?;

    for (i, r) in labels.results.iter().enumerate() {
        let t = &p.truth.frames[i].contour;
        let d0 = contour_distance_mm(&initial[i].pixels(), t, &p.bundle.grid);
        let d1 = contour_distance_mm(&labels.masks[i].pixels(), t, &p.bundle.grid);
        println!(
            "frame {:2} {:?}: correction {:.2} mm, initial {} mm, refined {} mm",
            r.frame_id,
            r.status,
            r.fiducial_correction_mm,
            d0.map_or("-".into(), |d| format!("{d:.3}")),
            d1.map_or("-".into(), |d| format!("{d:.3}")),
        );
    }
    let s = labels.summary;
    println!("accepted {}, rejected {}, discarded {:.1}%", s.accepted, s.rejected, 100.0 * s.discard_fraction);
    Ok(())
}
