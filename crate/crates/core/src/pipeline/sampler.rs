use std::collections::BTreeMap;

use crate::cost::macs_bilinear;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::ops::bilinear_taps;
use crate::tensor::DenseTensor;

/// Source of image-level neck features, addressed by pyramid level and
/// image coordinates. Level `k` has stride `2^k`.
pub trait FeatureSampler: Sync {
    fn channels(&self) -> usize;
    /// Writes the feature at image position `(x, y)` into `out`.
    fn sample(&self, level: u32, x: f64, y: f64, out: &mut [f32]);
}

/// Continuous grid coordinates of an image position on a level: grid node
/// `(i, j)` sits at pixel `((j + 0.5) * stride, (i + 0.5) * stride)`.
fn grid_coords(level: u32, x: f64, y: f64) -> (f32, f32) {
    let stride = (1u64 << level) as f64;
    ((y / stride - 0.5) as f32, (x / stride - 0.5) as f32)
}

/// Bilinear sampling of caller-provided feature maps, zero outside them.
#[derive(Debug, Clone)]
pub struct PyramidSampler {
    channels: usize,
    levels: BTreeMap<u32, DenseTensor>,
}

impl PyramidSampler {
    pub fn new(levels: BTreeMap<u32, DenseTensor>) -> Result<Self> {
        let channels = levels
            .values()
            .next()
            .map(|d| d.features())
            .ok_or_else(|| Error::Missing("feature pyramid has no levels".into()))?;
        if levels.values().any(|d| d.features() != channels) {
            return Err(Error::dim("pyramid levels differ in channel count"));
        }
        Ok(PyramidSampler { channels, levels })
    }
}

impl FeatureSampler for PyramidSampler {
    fn channels(&self) -> usize {
        self.channels
    }

    fn sample(&self, level: u32, x: f64, y: f64, out: &mut [f32]) {
        out.fill(0.0);
        let Some(map) = self.levels.get(&level) else {
            return;
        };
        let (gy, gx) = grid_coords(level, x, y);
        let (taps, n) = bilinear_taps(gy, gx);
        let (h, w) = (map.height() as isize, map.width() as isize);
        for &(ty, tx, wt) in &taps[..n] {
            if ty < 0 || tx < 0 || ty >= h || tx >= w {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                *o += wt * map.get(c, ty as usize, tx as usize);
            }
        }
    }
}

/// Procedural features: every grid node of every level holds seeded
/// pseudo-random values in `[-1, 1)`, interpolated bilinearly. Stands in
/// for a backbone when only shapes and costs matter.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSampler {
    pub seed: u64,
    pub channels: usize,
}

impl FeatureSampler for SyntheticSampler {
    fn channels(&self) -> usize {
        self.channels
    }

    fn sample(&self, level: u32, x: f64, y: f64, out: &mut [f32]) {
        out.fill(0.0);
        let (gy, gx) = grid_coords(level, x, y);
        let (taps, n) = bilinear_taps(gy, gx);
        for &(ty, tx, wt) in &taps[..n] {
            let node = hash4(self.seed, level as u64, ty as u64, tx as u64);
            for (c, o) in out.iter_mut().enumerate() {
                *o += wt * unit(hash4(node, c as u64, 0, 0));
            }
        }
    }
}

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn hash4(a: u64, b: u64, c: u64, d: u64) -> u64 {
    splitmix(splitmix(splitmix(splitmix(a) ^ b) ^ c) ^ d)
}

/// Maps a hash to `[-1, 1)`.
pub(crate) fn unit(h: u64) -> f32 {
    ((h >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
}

/// Center of cell `(y, x)` of a `side x side` grid laid over `b`.
pub(crate) fn cell_center(b: &BBox, side: usize, y: usize, x: usize) -> (f64, f64) {
    (
        b.x0 + (x as f64 + 0.5) / side as f64 * b.width(),
        b.y0 + (y as f64 + 0.5) / side as f64 * b.height(),
    )
}

/// RoIAlign with one sample per bin: the `side x side` grid of features
/// sampled at bin centers. Returns the tensor and its MAC count.
pub fn roi_align(sampler: &dyn FeatureSampler, level: u32, b: &BBox, side: usize) -> Result<(DenseTensor, u64)> {
    let c = sampler.channels();
    let mut cells = vec![0.0; side * side * c];
    for (i, dst) in cells.chunks_mut(c).enumerate() {
        let (x, y) = cell_center(b, side, i / side, i % side);
        sampler.sample(level, x, y, dst);
    }
    let t = DenseTensor::from_cell_major(c, side, side, &cells)?;
    Ok((t, macs_bilinear((side * side) as u64, c as u64)))
}
