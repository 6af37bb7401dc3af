use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::metrics::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Shape {
    Disk {
        radius: f64,
    },
    /// Rotated by `angle` radians.
    Ellipse {
        rx: f64,
        ry: f64,
        angle: f64,
    },
    /// Star-shaped around its center:
    /// `r(t) = radius * (1 + sum_k a_k cos(k t + phi_k))`, with seeded
    /// `a_k` whose absolute values sum to at most `amplitude`.
    Blob {
        radius: f64,
        harmonics: u32,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Disk,
    Ellipse,
    Blob,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticShapeSpec {
    pub shape: Shape,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    /// Mask on the full canvas.
    pub mask: BinaryMask,
    /// Tight integer box around the mask.
    pub bbox: BBox,
    /// The mask cropped to `bbox`.
    pub roi_mask: BinaryMask,
}

impl Shape {
    /// Largest distance of the boundary from the center.
    fn reach(&self) -> f64 {
        match *self {
            Shape::Disk { radius } => radius,
            Shape::Ellipse { rx, ry, .. } => rx.max(ry),
            Shape::Blob { radius, amplitude, .. } => radius * (1.0 + amplitude),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Disk { radius } => radius > 0.0,
            Shape::Ellipse { rx, ry, angle } => rx > 0.0 && ry > 0.0 && angle.is_finite(),
            Shape::Blob {
                radius,
                harmonics,
                amplitude,
            } => radius > 0.0 && harmonics >= 1 && (0.0..1.0).contains(&amplitude),
        };
        if ok && self.reach().is_finite() {
            Ok(())
        } else {
            Err(Error::contract(format!("invalid shape parameters {self:?}")))
        }
    }

    /// Parameters for a shape of the given kind drawn from `seed`, sized
    /// so the tight box is at least `min_side` pixels wide and high.
    pub fn random(kind: ShapeKind, min_side: usize, max_reach: f64, seed: u64) -> Shape {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5a4e);
        let lo = min_side as f64 / 2.0 + 2.0;
        match kind {
            ShapeKind::Disk => Shape::Disk {
                radius: rng.random_range(lo..max_reach),
            },
            ShapeKind::Ellipse => Shape::Ellipse {
                rx: rng.random_range(lo..max_reach),
                ry: rng.random_range(lo..max_reach),
                angle: rng.random_range(0.0..PI),
            },
            ShapeKind::Blob => {
                let amplitude = rng.random_range(0.15..0.35);
                let lo = lo / (1.0 - amplitude);
                Shape::Blob {
                    radius: rng.random_range(lo..(max_reach / (1.0 + amplitude)).max(lo + 1.0)),
                    harmonics: rng.random_range(2..=5),
                    amplitude,
                }
            }
        }
    }
}

/// Rasterizes a seeded shape at a seeded position fully inside the canvas.
pub fn gen_synthetic(spec: &SyntheticShapeSpec) -> Result<SyntheticSample> {
    spec.shape.validate()?;
    let (w, h) = (spec.width, spec.height);
    let reach = spec.shape.reach();
    let margin = reach + 1.0;
    if 2.0 * margin >= w as f64 || 2.0 * margin >= h as f64 {
        return Err(Error::contract(format!(
            "shape of reach {reach} does not fit a {w}x{h} canvas"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cx = rng.random_range(margin..w as f64 - margin);
    let cy = rng.random_range(margin..h as f64 - margin);

    let inside: Box<dyn Fn(f64, f64) -> bool> = match spec.shape {
        Shape::Disk { radius } => Box::new(move |dx, dy| dx * dx + dy * dy <= radius * radius),
        Shape::Ellipse { rx, ry, angle } => {
            let (s, c) = angle.sin_cos();
            Box::new(move |dx, dy| {
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            })
        }
        Shape::Blob {
            radius,
            harmonics,
            amplitude,
        } => {
            let raw: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let coeffs: Vec<(f64, f64)> = raw
                .iter()
                .map(|a| (a / total * amplitude, rng.random_range(0.0..2.0 * PI)))
                .collect();
            Box::new(move |dx, dy| {
                let t = dy.atan2(dx);
                let r: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, &(a, phi))| a * ((k as f64 + 1.0) * t + phi).cos())
                    .sum();
                dx * dx + dy * dy <= (radius * (1.0 + r)).powi(2)
            })
        }
    };
    let mut bits: Vec<bool> = (0..w * h)
        .map(|i| inside((i % w) as f64 + 0.5 - cx, (i / w) as f64 + 0.5 - cy))
        .collect();
    if matches!(spec.shape, Shape::Blob { .. }) {
        bits = component_at(&bits, w, h, cx as usize, cy as usize);
    }
    let mask = BinaryMask::from_bitmap(w, h, &bits)?;
    let [x0, y0, x1, y1] = mask
        .bounds()
        .ok_or_else(|| Error::contract("shape rasterized to an empty mask"))?;
    let (bw, bh) = (x1 - x0, y1 - y0);
    let roi_mask = BinaryMask::from_fn(bw, bh, |x, y| bits[(y + y0) * w + x + x0]);
    Ok(SyntheticSample {
        mask,
        bbox: BBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64)?,
        roi_mask,
    })
}

/// The 4-connected foreground component containing `(x, y)`.
pub(crate) fn component_at(bits: &[bool], w: usize, h: usize, x: usize, y: usize) -> Vec<bool> {
    let mut out = vec![false; w * h];
    if !bits[y * w + x] {
        return out;
    }
    let mut queue = VecDeque::from([(x, y)]);
    out[y * w + x] = true;
    while let Some((x, y)) = queue.pop_front() {
        let mut visit = |nx: usize, ny: usize| {
            let i = ny * w + nx;
            if bits[i] && !out[i] {
                out[i] = true;
                queue.push_back((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }
    out
}
