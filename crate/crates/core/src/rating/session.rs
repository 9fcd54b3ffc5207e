use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, save_rgb_png, write_json};
use crate::labeler::LabelMask;
use crate::sweep::GrayImage;

pub const SESSION_FILE: &str = "session.json";
pub const KEY_FILE: &str = "blinding_key.json";

/// Scale bars of 1, 2 and 3 mm drawn in the top-left corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleBar {
    pub origin_px: [u32; 2],
    pub row_spacing_px: u32,
    pub thickness_px: u32,
    pub mm: [u32; 3],
    pub lengths_px: [u32; 3],
}

impl ScaleBar {
    pub fn for_spacing(sx_mm: f64) -> Self {
        let len = |k: u32| (k as f64 / sx_mm).round() as u32;
        Self {
            origin_px: [4, 4],
            row_spacing_px: 5,
            thickness_px: 2,
            mm: [1, 2, 3],
            lengths_px: [len(1), len(2), len(3)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionItem {
    pub item_id: String,
    pub frame_id: u32,
    /// Overlay path relative to the session directory.
    pub image: String,
    pub blinded_method_id: String,
}

/// The rater-facing half of a session; carries no method names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSession {
    pub session_id: String,
    pub rater_id: String,
    pub items: Vec<SessionItem>,
    pub scale_bar: ScaleBar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyEntry {
    pub item_id: String,
    pub frame_id: u32,
    pub method: String,
}

/// Maps blinded ids back to methods. Stored apart from the session and never served.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindingKey {
    pub session_id: String,
    pub methods: BTreeMap<String, String>,
    pub items: Vec<KeyEntry>,
}

impl BlindingKey {
    pub fn method_of(&self, item_id: &str) -> Option<&str> {
        self.items.iter().find(|e| e.item_id == item_id).map(|e| e.method.as_str())
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

pub struct RatingFrame {
    pub frame_id: u32,
    pub image: GrayImage,
}

pub struct MethodMasks {
    pub name: String,
    pub masks: BTreeMap<u32, LabelMask>,
}

pub struct BuiltSession {
    pub session: RatingSession,
    pub key: BlindingKey,
    /// `(file name, RGB bytes)` per item, in item order.
    pub overlays: Vec<(String, Vec<u8>)>,
    pub width: u32,
    pub height: u32,
}

fn token(rng: &mut ChaCha8Rng) -> String {
    format!("{:016x}", rng.random::<u64>())
}

/// Mask tinted over the frame with the scale bars burned in.
pub fn compose_overlay(image: &GrayImage, mask: &LabelMask, bar: &ScaleBar) -> Vec<u8> {
    let mut rgb = Vec::with_capacity(image.data.len() * 3);
    for (i, &g) in image.data.iter().enumerate() {
        if mask.bits[i] {
            let g = g as f64 * 0.4;
            rgb.extend_from_slice(&[(g + 153.0) as u8, (g + 153.0) as u8, g as u8]);
        } else {
            rgb.extend_from_slice(&[g, g, g]);
        }
    }
    for (k, &len) in bar.lengths_px.iter().enumerate() {
        let y0 = bar.origin_px[1] + k as u32 * bar.row_spacing_px;
        for y in y0..y0 + bar.thickness_px {
            for x in bar.origin_px[0]..bar.origin_px[0] + len {
                if x < image.width && y < image.height {
                    let i = (y * image.width + x) as usize * 3;
                    rgb[i..i + 3].copy_from_slice(&[255, 255, 255]);
                }
            }
        }
    }
    rgb
}

/// Every `(frame, method)` pair once, in a seeded random order, under per-session blinded ids.
pub fn build_rating_session(frames: &[RatingFrame], methods: &[MethodMasks], sx_mm: f64, rater_id: &str, seed: u64) -> Result<BuiltSession> {
    if frames.is_empty() {
        return Err(Error::InsufficientData("rating session needs at least one frame".into()));
    }
    if methods.len() < 2 {
        return Err(Error::InsufficientData("rating session needs at least two methods".into()));
    }
    let (width, height) = (frames[0].image.width, frames[0].image.height);
    if frames.iter().any(|f| f.image.width != width || f.image.height != height) {
        return Err(Error::domain("rating frames differ in size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let session_id = token(&mut rng);
    let blinded: Vec<String> = methods.iter().map(|_| token(&mut rng)).collect();
    let mut pairs = Vec::with_capacity(frames.len() * methods.len());
    for (fi, f) in frames.iter().enumerate() {
        for (mi, m) in methods.iter().enumerate() {
            let mask = m.masks.get(&f.frame_id).ok_or_else(|| Error::MissingMask {
                frame: f.frame_id.to_string(),
                method: m.name.clone(),
            })?;
            if mask.width != width || mask.height != height {
                return Err(Error::domain(format!("mask of frame {} / method {} has the wrong size", f.frame_id, m.name)));
            }
            pairs.push((fi, mi));
        }
    }
    pairs.shuffle(&mut rng);
    let bar = ScaleBar::for_spacing(sx_mm);
    let mut items = Vec::with_capacity(pairs.len());
    let mut entries = Vec::with_capacity(pairs.len());
    let mut overlays = Vec::with_capacity(pairs.len());
    for (fi, mi) in pairs {
        let item_id = token(&mut rng);
        let file = format!("overlays/{item_id}.png");
        let f = &frames[fi];
        let m = &methods[mi];
        overlays.push((file.clone(), compose_overlay(&f.image, &m.masks[&f.frame_id], &bar)));
        items.push(SessionItem {
            item_id: item_id.clone(),
            frame_id: f.frame_id,
            image: file,
            blinded_method_id: blinded[mi].clone(),
        });
        entries.push(KeyEntry {
            item_id,
            frame_id: f.frame_id,
            method: m.name.clone(),
        });
    }
    Ok(BuiltSession {
        session: RatingSession {
            session_id: session_id.clone(),
            rater_id: rater_id.to_string(),
            items,
            scale_bar: bar,
        },
        key: BlindingKey {
            session_id,
            methods: methods.iter().zip(&blinded).map(|(m, b)| (b.clone(), m.name.clone())).collect(),
            items: entries,
        },
        overlays,
        width,
        height,
    })
}

impl BuiltSession {
    /// Writes `<root>/<session_id>/{session.json, overlays/}` and the key to `key_path`.
    pub fn save(&self, root: &Path, key_path: &Path) -> Result<std::path::PathBuf> {
        let dir = root.join(&self.session.session_id);
        std::fs::create_dir_all(dir.join("overlays"))?;
        for (file, rgb) in &self.overlays {
            save_rgb_png(&dir.join(file), self.width, self.height, rgb)?;
        }
        write_json(&dir.join(SESSION_FILE), &self.session)?;
        if let Some(parent) = key_path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_json(key_path, &self.key)?;
        Ok(dir)
    }
}

impl RatingSession {
    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(SESSION_FILE))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::collections::HashMap;

    pub(crate) fn fixture(n_frames: u32, names: &[&str]) -> (Vec<RatingFrame>, Vec<MethodMasks>) {
        let frames = (0..n_frames)
            .map(|i| {
                let mut image = GrayImage::new(40, 30);
                image.set(i, 5, 200);
                RatingFrame { frame_id: 10 + i, image }
            })
            .collect();
        let methods = names
            .iter()
            .enumerate()
            .map(|(k, n)| {
                let masks = (0..n_frames)
                    .map(|i| {
                        let mut m = LabelMask::empty(40, 30);
                        m.set(i + k as u32, 12, true);
                        (10 + i, m)
                    })
                    .collect();
                MethodMasks { name: n.to_string(), masks }
            })
            .collect();
        (frames, methods)
    }

    #[test]
    fn every_pair_once() {
        let (f, m) = fixture(2, &["initial", "registration", "refined"]);
        let s = build_rating_session(&f, &m, 0.15, "r1", 4).unwrap();
        assert_eq!(s.session.items.len(), 6);
        let mut seen: Vec<(u32, String)> = s.key.items.iter().map(|e| (e.frame_id, e.method.clone())).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn seeded_and_blind() {
        let (f, m) = fixture(2, &["initial", "registration", "refined"]);
        let a = build_rating_session(&f, &m, 0.15, "r1", 4).unwrap();
        let b = build_rating_session(&f, &m, 0.15, "r1", 4).unwrap();
        assert_eq!(a.session, b.session);
        assert_eq!(a.key, b.key);
        let c = build_rating_session(&f, &m, 0.15, "r1", 5).unwrap();
        assert_ne!(a.session.session_id, c.session.session_id);
        let text = serde_json::to_string(&a.session).unwrap();
        for name in ["initial", "registration", "refined"] {
            assert!(!text.contains(name));
        }
    }

    #[test]
    fn scale_bar_lengths() {
        assert_eq!(ScaleBar::for_spacing(0.15).lengths_px, [7, 13, 20]);
    }

    #[test]
    fn missing_mask_names_pair() {
        let (f, mut m) = fixture(2, &["a", "b"]);
        m[1].masks.remove(&11);
        match build_rating_session(&f, &m, 0.15, "r1", 0) {
            Err(Error::MissingMask { frame, method }) => assert_eq!((frame.as_str(), method.as_str()), ("11", "b")),
            Err(e) => panic!("{e}"),
            Ok(_) => panic!("built without a mask"),
        }
    }

    #[test]
    fn permutation_is_uniform() {
        let (f, m) = fixture(1, &["a", "b", "c"]);
        let mut counts: HashMap<Vec<String>, usize> = HashMap::new();
        for seed in 0..1000 {
            let s = build_rating_session(&f, &m, 0.15, "r", seed).unwrap();
            let order: Vec<String> = s.key.items.iter().map(|e| e.method.clone()).collect();
            *counts.entry(order).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        for c in counts.values() {
            assert!((*c as f64 / 1000.0 - 1.0 / 6.0).abs() <= 0.05, "{counts:?}");
        }
    }

    #[test]
    fn overlay_draws_bar_and_mask() {
        let (f, m) = fixture(1, &["a", "b"]);
        let bar = ScaleBar::for_spacing(0.15);
        let rgb = compose_overlay(&f[0].image, &m[0].masks[&10], &bar);
        let px = |x: u32, y: u32| &rgb[(y * 40 + x) as usize * 3..][..3];
        assert_eq!(px(4, 4), &[255, 255, 255]);
        assert_eq!(px(4 + 6, 4), &[255, 255, 255]);
        assert_eq!(px(4 + 7, 4), &[0, 0, 0]);
        assert_eq!(px(0, 12), &[153, 153, 0]);
    }
}
