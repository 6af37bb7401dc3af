use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixels at or above this probability count as foreground.
pub const MASK_THRESHOLD: f32 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreInputs {
    pub s_cls: f64,
    pub probs: Vec<f32>,
}

/// `s_cls` times the mean probability over predicted-foreground pixels;
/// zero when nothing is foreground.
pub fn seg_score(si: &ScoreInputs) -> Result<f64> {
    if !(0.0..=1.0).contains(&si.s_cls) {
        return Err(Error::contract(format!("class score {} outside [0, 1]", si.s_cls)));
    }
    if si.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::contract("mask probabilities must lie in [0, 1]"));
    }
    let (mut sum, mut n) = (0.0f64, 0usize);
    for &p in &si.probs {
        if p >= MASK_THRESHOLD {
            sum += p as f64;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { si.s_cls * sum / n as f64 })
}
