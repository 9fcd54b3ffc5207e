//! Builds a blinded rating session from two mask sets and optionally serves it.
//!
//! cargo run --example rating_session -- [out_dir] [--serve]

use std::collections::BTreeMap;
use std::path::PathBuf;

use bonelabel::labeler::LabelMask;
use bonelabel::phantom::{generate_phantom, PhantomConfig, SweepLayout};
use bonelabel::rating::{build_rating_session, serve, AppState, MethodMasks, RatingFrame};

fn shifted(m: &LabelMask, dv: u32) -> LabelMask {
    let mut out = LabelMask::empty(m.width, m.height);
    for (u, v) in m.pixels() {
        if v + dv < m.height {
            out.set(u, v + dv, true);
        }
    }
    out
}

#[tokio::main]
async fn main() -> bonelabel::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.iter().find(|a| !a.starts_with("--")).cloned().unwrap_or_else(|| "rating_out".into()));
    let cfg = PhantomConfig {
        layout: SweepLayout { frames: 4, ..SweepLayout::default() },
        ..PhantomConfig::default()
    };
    let p = generate_phantom(&cfg, 9)?;
    let truth = p.truth_masks();
    let frames: Vec<RatingFrame> = p.bundle.frames.iter().map(|f| RatingFrame { frame_id: f.id, image: f.image.clone() }).collect();
    let exact: BTreeMap<u32, LabelMask> = p.bundle.frames.iter().map(|f| f.id).zip(truth.iter().cloned()).collect();
    let off: BTreeMap<u32, LabelMask> = p.bundle.frames.iter().map(|f| f.id).zip(truth.iter().map(|m| shifted(m, 12))).collect();
    let methods = vec![
        MethodMasks { name: "exact".into(), masks: exact },
        MethodMasks { name: "offset".into(), masks: off },
    ];
    let built = build_rating_session(&frames, &methods, p.bundle.grid.sx, "demo", 1)?;
    let sid = built.session.session_id.clone();
    let dir = built.save(&out.join("sessions"), &out.join("keys").join(format!("{sid}.json")))?;
    println!("session {sid}: {} items in {}", built.session.items.len(), dir.display());
    for item in &built.session.items {
        println!("  {} frame {} method {}", item.item_id, item.frame_id, item.blinded_method_id);
    }
    if args.iter().any(|a| a == "--serve") {
        let state = AppState::load(&out.join("sessions"), None)?;
        println!("GET http://127.0.0.1:8080/api/session/{sid}/next");
        serve(state, "127.0.0.1:8080".parse().unwrap()).await?;
    }
    Ok(())
}
