use crate::error::{Error, Result};
use crate::tensor::CellCoord;

pub fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

/// Nearest-neighbor 2x upsampling of a row-major `h x w` grid.
pub fn upsample_nearest(prev: &[f32], h: usize, w: usize) -> Vec<f32> {
    let w2 = 2 * w;
    let mut out = vec![0.0; 4 * h * w];
    for (i, v) in out.iter_mut().enumerate() {
        let (y, x) = (i / w2, i % w2);
        *v = prev[(y / 2) * w + x / 2];
    }
    out
}

/// Upsamples the previous stage's probabilities by 2 and overwrites the
/// given cells of the finer grid with `sigmoid(logit)`.
pub fn assemble_mask(prev: &[f32], h: usize, w: usize, cells: &[CellCoord], logits: &[f32]) -> Result<Vec<f32>> {
    if prev.len() != h * w {
        return Err(Error::dim("previous mask does not match its grid"));
    }
    if cells.len() != logits.len() {
        return Err(Error::dim("one logit per active cell is required"));
    }
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = upsample_nearest(prev, h, w);
    for (c, &l) in cells.iter().zip(logits) {
        if c.y >= h2 || c.x >= w2 {
            return Err(Error::Bounds {
                y: c.y,
                x: c.x,
                height: h2,
                width: w2,
            });
        }
        out[c.y * w2 + c.x] = sigmoid(l);
    }
    Ok(out)
}
