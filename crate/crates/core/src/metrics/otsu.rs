use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeler::{IntensityClass, LabelMask};
use crate::sweep::GrayImage;

/// Threshold maximizing the between-class variance; class 0 is `0..=t`.
/// Ties resolve to the lowest threshold.
pub fn otsu_threshold(hist: &[u64; 256]) -> Result<u8> {
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateHistogram);
    }
    let n: u128 = hist.iter().map(|&c| c as u128).sum();
    let s: u128 = hist.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
    let (mut n0, mut s0) = (0u128, 0u128);
    let mut best = (f64::NEG_INFINITY, 0u8);
    for t in 0..255usize {
        n0 += hist[t] as u128;
        s0 += t as u128 * hist[t] as u128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // n^2 * w0 * w1 * (mu0 - mu1)^2, up to the constant n^2
        let num = (n * s0) as f64 - (n0 * s) as f64;
        let var = num * num / (n0 as f64 * n1 as f64);
        if var > best.0 {
            best = (var, t as u8);
        }
    }
    Ok(best.1)
}

/// Histogram of image intensities under the labeled pixels of each mask.
pub fn label_histogram<'a>(pairs: impl IntoIterator<Item = (&'a LabelMask, &'a GrayImage)>) -> [u64; 256] {
    let mut h = [0u64; 256];
    for (mask, image) in pairs {
        for (u, v) in mask.pixels() {
            h[image.get(u, v) as usize] += 1;
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntensitySplit {
    pub threshold: u8,
}

impl IntensitySplit {
    pub fn from_histogram(hist: &[u64; 256]) -> Result<Self> {
        Ok(Self {
            threshold: otsu_threshold(hist)?,
        })
    }

    pub fn classify(&self, intensity: u8) -> IntensityClass {
        if intensity > self.threshold {
            IntensityClass::High
        } else {
            IntensityClass::Low
        }
    }
}
