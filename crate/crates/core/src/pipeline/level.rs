use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Lowest pyramid level with neck features.
pub const MIN_LEVEL: u32 = 2;
/// Highest pyramid level.
pub const MAX_LEVEL: u32 = 5;

/// Pyramid level of the stage-0 RoI features:
/// `2 + min(floor(log2(sqrt(w * h) / 56)), 3)`, at least 2.
pub fn assign_level(b: &BBox) -> Result<u32> {
    let (w, h) = (b.width(), b.height());
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::contract(format!("RoI box {w}x{h} has no area")));
    }
    let k = ((w * h).sqrt() / 56.0).log2().floor().min(3.0);
    Ok((2.0 + k).max(MIN_LEVEL as f64) as u32)
}

/// Level used at stage `s`: one level finer per stage, never below 2.
pub fn stage_level(k0: u32, s: u8) -> u32 {
    k0.saturating_sub(s as u32).max(MIN_LEVEL)
}
