use crate::geometry::BBox;
use crate::metrics::BinaryMask;

/// Bilinear lookup in a row-major `h x w` grid at continuous cell
/// coordinates, clamped to the grid edges.
pub(crate) fn bilinear_clamped(grid: &[f32], h: usize, w: usize, v: f64, u: f64) -> f64 {
    let v = v.clamp(0.0, (h - 1) as f64);
    let u = u.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (v.floor() as usize, u.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (ly, lx) = (v - y0 as f64, u - x0 as f64);
    let g = |y: usize, x: usize| grid[y * w + x] as f64;
    (1.0 - ly) * ((1.0 - lx) * g(y0, x0) + lx * g(y0, x1)) + ly * ((1.0 - lx) * g(y1, x0) + lx * g(y1, x1))
}

/// Resamples an `side x side` RoI probability grid onto the pixels of
/// `box` whose centers fall inside it and thresholds at 0.5.
pub fn paste_mask(roi: &[f32], side: usize, b: &BBox, image_width: usize, image_height: usize) -> BinaryMask {
    debug_assert_eq!(roi.len(), side * side);
    if b.width() <= 0.0 || b.height() <= 0.0 {
        return BinaryMask::empty(image_width, image_height);
    }
    let sx = side as f64 / b.width();
    let sy = side as f64 / b.height();
    BinaryMask::from_fn(image_width, image_height, |x, y| {
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        if cx < b.x0 || cx >= b.x1 || cy < b.y0 || cy >= b.y1 {
            return false;
        }
        let u = (cx - b.x0) * sx - 0.5;
        let v = (cy - b.y0) * sy - 0.5;
        bilinear_clamped(roi, side, side, v, u) >= 0.5
    })
}
