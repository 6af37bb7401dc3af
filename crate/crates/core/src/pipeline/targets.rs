use crate::error::{Error, Result};
use crate::metrics::BinaryMask;

/// Per-cell training targets of one stage grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellTargets {
    pub height: usize,
    pub width: usize,
    /// Ground-truth value at the pixel holding the cell center.
    pub seg: Vec<bool>,
    /// Whether the cell footprint holds both foreground and background.
    pub refine: Vec<bool>,
}

/// Pixel span `[lo, hi)` of cell `i` when `pixels` are split into `cells`.
pub(crate) fn footprint(i: usize, cells: usize, pixels: usize) -> (usize, usize) {
    (i * pixels / cells, (i + 1) * pixels / cells)
}

/// Pixel containing the center of cell `i`.
pub(crate) fn center_pixel(i: usize, cells: usize, pixels: usize) -> usize {
    ((2 * i + 1) * pixels / (2 * cells)).min(pixels - 1)
}

/// Samples segmentation and refinement targets for an `height x width` grid
/// laid over a mask in the RoI frame.
pub fn make_targets(gt: &BinaryMask, height: usize, width: usize) -> Result<CellTargets> {
    let (mw, mh) = (gt.width(), gt.height());
    if mw < width || mh < height {
        return Err(Error::contract(format!(
            "a {mw}x{mh} mask cannot resolve a {width}x{height} grid"
        )));
    }
    let bits = gt.to_bitmap();
    // per-row prefix sums of foreground pixels
    let mut pref = vec![0u32; mh * (mw + 1)];
    for y in 0..mh {
        for x in 0..mw {
            pref[y * (mw + 1) + x + 1] = pref[y * (mw + 1) + x] + bits[y * mw + x] as u32;
        }
    }
    let mut seg = Vec::with_capacity(height * width);
    let mut refine = Vec::with_capacity(height * width);
    for cy in 0..height {
        let (y0, y1) = footprint(cy, height, mh);
        let py = center_pixel(cy, height, mh);
        for cx in 0..width {
            let (x0, x1) = footprint(cx, width, mw);
            let px = center_pixel(cx, width, mw);
            seg.push(bits[py * mw + px]);
            let fg: u32 = (y0..y1)
                .map(|y| pref[y * (mw + 1) + x1] - pref[y * (mw + 1) + x0])
                .sum();
            let total = ((y1 - y0) * (x1 - x0)) as u32;
            refine.push(fg > 0 && fg < total);
        }
    }
    Ok(CellTargets {
        height,
        width,
        seg,
        refine,
    })
}
