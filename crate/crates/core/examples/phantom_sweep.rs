//! Generates a synthetic tracked sweep and writes it in the on-disk layout.
//!
//! cargo run --release --example phantom_sweep -- [out_dir] [frames]

use std::path::PathBuf;

use bonelabel::io::{save_ground_truth, save_mesh, save_sweep};
use bonelabel::phantom::{generate_phantom, PhantomConfig, SweepLayout};

fn main() -> bonelabel::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "phantom_out".into()));
    let frames = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let cfg = PhantomConfig {
        layout: SweepLayout { frames, ..SweepLayout::default() },
        perturb_angle_deg: 0.5,
        perturb_trans_mm: 0.5,
        ..PhantomConfig::default()
    };
    let p = generate_phantom(&cfg, 1)?;
    save_sweep(&p.bundle, &out.join("sweep"))?;
    save_mesh(&out.join("mesh.ply"), &p.mesh)?;
    save_ground_truth(&out.join("ground_truth.json"), &p.truth)?;

    let contour: usize = p.truth.frames.iter().map(|f| f.contour.len()).sum();
    println!("{} frames of {}x{} px at {} mm", p.bundle.frames.len(), p.bundle.grid.width, p.bundle.grid.height, p.bundle.grid.sx);
    println!("{} mesh triangles, {} contour pixels", p.mesh.triangles().len(), contour);
    println!("probe samples {}, specimen samples {}", p.bundle.probe.samples().len(), p.bundle.specimen.samples().len());
    println!("written to {}", out.display());
    Ok(())
}
