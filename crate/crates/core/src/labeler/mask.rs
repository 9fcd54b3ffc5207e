use serde::{Deserialize, Serialize};

use crate::geometry::PixelGrid;
use crate::labeler::intersect::IntersectionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityClass {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelProvenance {
    pub refined: bool,
    pub filters: Vec<String>,
}

/// Binary per-pixel bone label, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
    /// Incidence angle of labeled pixels; 0 elsewhere.
    pub alpha_deg: Vec<f64>,
    /// Intensity class of labeled pixels, once assigned.
    pub class: Vec<Option<IntensityClass>>,
    pub provenance: LabelProvenance,
}

impl LabelMask {
    pub fn empty(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            bits: vec![false; n],
            alpha_deg: vec![0.0; n],
            class: vec![None; n],
            provenance: LabelProvenance::default(),
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize);
        Self {
            bits,
            ..Self::empty(width, height)
        }
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        self.bits[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, on: bool) {
        self.bits[v as usize * self.width as usize + u as usize] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Labeled pixels in row-major order.
    pub fn pixels(&self) -> Vec<(u32, u32)> {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| ((i % w) as u32, (i / w) as u32))
            .collect()
    }
}

/// Mask with exactly the set's pixels.
pub fn rasterize_label(iset: &IntersectionSet, grid: &PixelGrid) -> LabelMask {
    let mut m = LabelMask::empty(grid.width, grid.height);
    for p in &iset.pixels {
        if p.u < grid.width && p.v < grid.height {
            let i = grid.index(p.u, p.v);
            m.bits[i] = true;
            m.alpha_deg[i] = p.alpha_deg;
        }
    }
    m
}
