use serde::{Deserialize, Serialize};

use super::matching::score_order;
use super::{iou, BBox};
use crate::error::Result;
use crate::metrics::BinaryMask;

pub const NMS_DEFAULT: f64 = 0.5;
pub const NMS_065: f64 = 0.65;
pub const NMS_070: f64 = 0.70;

/// Detections kept after class-aware inference.
pub const MAX_DETECTIONS: usize = 100;

/// Greedy NMS. Returns kept indices in descending score order (ties by lower
/// index). A detection is dropped iff its IoU with a kept one exceeds `thresh`.
pub fn nms(dets: &[(BBox, f64)], thresh: f64) -> Vec<usize> {
    greedy(dets.iter().map(|d| d.1), |a, b| Ok(iou(&dets[a].0, &dets[b].0)), thresh).expect("box IoU is infallible")
}

/// Greedy NMS on masks sharing one canvas.
pub fn mask_nms(masks: &[(BinaryMask, f64)], thresh: f64) -> Result<Vec<usize>> {
    greedy(masks.iter().map(|m| m.1), |a, b| masks[a].0.iou(&masks[b].0), thresh)
}

fn greedy(
    scores: impl Iterator<Item = f64>,
    overlap: impl Fn(usize, usize) -> Result<f64>,
    thresh: f64,
) -> Result<Vec<usize>> {
    let mut kept: Vec<usize> = Vec::new();
    'outer: for i in score_order(scores) {
        for &j in &kept {
            if overlap(i, j)? > thresh {
                continue 'outer;
            }
        }
        kept.push(i);
    }
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassDetection {
    pub box_index: usize,
    pub bbox: BBox,
    pub class: usize,
    pub score: f64,
}

/// Expands every box into one detection per class, runs NMS per class and
/// keeps the `top` highest-scoring results (ties by box, then class index).
pub fn multiclass_inference(
    boxes: &[BBox],
    class_scores: &[Vec<f64>],
    nms_thresh: f64,
    top: usize,
) -> Vec<ClassDetection> {
    let classes = class_scores.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::new();
    for c in 0..classes {
        let cands: Vec<(usize, f64)> = class_scores
            .iter()
            .enumerate()
            .filter_map(|(b, s)| s.get(c).map(|&v| (b, v)))
            .collect();
        let dets: Vec<(BBox, f64)> = cands.iter().map(|&(b, s)| (boxes[b], s)).collect();
        for k in nms(&dets, nms_thresh) {
            let (b, s) = cands[k];
            out.push(ClassDetection {
                box_index: b,
                bbox: boxes[b],
                class: c,
                score: s,
            });
        }
    }
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.box_index.cmp(&b.box_index))
            .then(a.class.cmp(&b.class))
    });
    out.truncate(top);
    out
}
