use serde::{Deserialize, Serialize};

use super::BBox;
use crate::error::{Error, Result};

/// Anchor sizes, aspect ratios and pyramid levels. Level `l` has stride
/// `2^l`; the base anchor side is `base_scale * stride`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSpec {
    pub sizes: Vec<f64>,
    pub ratios: Vec<f64>,
    pub levels: Vec<u32>,
    pub base_scale: f64,
}

impl AnchorSpec {
    /// Three octave scales times three aspect ratios, base side `4 * stride`.
    pub fn retinanet(levels: Vec<u32>) -> Self {
        AnchorSpec {
            sizes: vec![1.0, 2f64.powf(1.0 / 3.0), 2f64.powf(2.0 / 3.0)],
            ratios: vec![0.5, 1.0, 2.0],
            levels,
            base_scale: 4.0,
        }
    }

    pub fn types_per_cell(&self) -> usize {
        self.sizes.len() * self.ratios.len()
    }

    fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.ratios.is_empty() || self.levels.is_empty() {
            return Err(Error::contract("anchor spec lists must be non-empty"));
        }
        if self
            .sizes
            .iter()
            .chain(&self.ratios)
            .chain(std::iter::once(&self.base_scale))
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::contract("anchor sizes and ratios must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub bbox: BBox,
    /// `size_index * ratios.len() + ratio_index`.
    pub kind: usize,
    pub level: u32,
}

/// One anchor per (level, cell, size, ratio), centered on the cell, with
/// area `(base * size)^2` and width/height equal to the ratio.
/// `grids[i]` is the `(height, width)` of `spec.levels[i]`.
pub fn gen_anchors(spec: &AnchorSpec, grids: &[(usize, usize)]) -> Result<Vec<Anchor>> {
    spec.validate()?;
    if grids.len() != spec.levels.len() {
        return Err(Error::dim("one grid size per pyramid level is required"));
    }
    let mut out = Vec::new();
    for (&level, &(h, w)) in spec.levels.iter().zip(grids) {
        let stride = 2f64.powi(level as i32);
        let base = spec.base_scale * stride;
        for y in 0..h {
            for x in 0..w {
                let cx = (x as f64 + 0.5) * stride;
                let cy = (y as f64 + 0.5) * stride;
                for (si, s) in spec.sizes.iter().enumerate() {
                    let side = base * s;
                    for (ri, r) in spec.ratios.iter().enumerate() {
                        let aw = side * r.sqrt();
                        let ah = side / r.sqrt();
                        out.push(Anchor {
                            bbox: BBox::from_center(cx, cy, aw, ah),
                            kind: si * spec.ratios.len() + ri,
                            level,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}
