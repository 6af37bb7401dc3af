use super::BinaryMask;
use crate::error::{Error, Result};

/// Band width as a fraction of the image diagonal.
pub const BOUNDARY_DILATION: f64 = 0.02;

/// `round(d_frac * diagonal)`, at least one pixel.
pub fn boundary_width(width: usize, height: usize, d_frac: f64) -> usize {
    let diag = ((width * width + height * height) as f64).sqrt();
    ((d_frac * diag).round() as usize).max(1)
}

/// Foreground pixels within `d` (Chebyshev distance) of the background,
/// where everything outside the canvas counts as background. Row-major.
pub fn band(mask: &BinaryMask, d: usize) -> Vec<bool> {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.to_bitmap();
    // prefix sums of foreground counts, (h + 1) x (w + 1)
    let mut sum = vec![0u32; (h + 1) * (w + 1)];
    for y in 0..h {
        let mut row = 0u32;
        for x in 0..w {
            row += bits[y * w + x] as u32;
            sum[(y + 1) * (w + 1) + x + 1] = sum[y * (w + 1) + x + 1] + row;
        }
    }
    let side = 2 * d + 1;
    let full = (side * side) as u32;
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if !bits[y * w + x] {
                continue;
            }
            let inside = y >= d && x >= d && y + d < h && x + d < w;
            let eroded = inside && {
                let (y0, x0, y1, x1) = (y - d, x - d, y + d + 1, x + d + 1);
                let s =
                    sum[y1 * (w + 1) + x1] + sum[y0 * (w + 1) + x0] - sum[y0 * (w + 1) + x1] - sum[y1 * (w + 1) + x0];
                s == full
            };
            out[y * w + x] = !eroded;
        }
    }
    out
}

/// IoU of the two masks after restricting both to the union of their
/// boundary bands.
pub fn boundary_iou(a: &BinaryMask, b: &BinaryMask, d_frac: f64) -> Result<f64> {
    if !a.same_canvas(b) {
        return Err(Error::dim("boundary IoU needs masks on the same canvas"));
    }
    let d = boundary_width(a.width(), a.height(), d_frac);
    let (ba, bb) = (band(a, d), band(b, d));
    let (pa, pb) = (a.to_bitmap(), b.to_bitmap());
    let (mut inter, mut union) = (0u64, 0u64);
    for i in 0..pa.len() {
        if !(ba[i] || bb[i]) {
            continue;
        }
        inter += (pa[i] && pb[i]) as u64;
        union += (pa[i] || pb[i]) as u64;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}
