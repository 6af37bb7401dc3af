use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::mask_nms;
use crate::metrics::{BinaryMask, PanopticSegment};

/// A scored mask entering panoptic post-processing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanopticDetection {
    pub mask: BinaryMask,
    #[serde(rename = "class")]
    pub class_id: u32,
    pub is_thing: bool,
    pub s_cls: f64,
    pub s_mask: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanopticParams {
    pub min_cls_score: f64,
    pub nms_iou: f64,
    pub pixel_score_floor: f64,
    pub min_overlap_iou: f64,
    pub min_area: u64,
}

impl Default for PanopticParams {
    fn default() -> Self {
        PanopticParams {
            min_cls_score: 0.3,
            nms_iou: 0.75,
            pixel_score_floor: 0.35,
            min_overlap_iou: 0.6,
            min_area: 150,
        }
    }
}

/// Turns overlapping scored masks into pixel-disjoint segments:
/// 1. drop detections with `s_cls` below the threshold;
/// 2. mask NMS ranked by `s_cls * s_mask`;
/// 3. give each pixel to the covering detection with the highest
///    `s_cls * s_mask`, leaving it unlabeled below the floor;
/// 4. drop segments that kept too little of their original mask;
/// 5. drop small segments;
/// 6. merge stuff segments of the same class.
///
/// Output follows the ranking order, with merged stuff at the position of
/// its highest-ranked member.
pub fn panoptic_postprocess(dets: &[PanopticDetection], params: &PanopticParams) -> Result<Vec<PanopticSegment>> {
    let Some(first) = dets.first() else {
        return Ok(Vec::new());
    };
    let (w, h) = (first.mask.width(), first.mask.height());
    if dets.iter().any(|d| !d.mask.same_canvas(&first.mask)) {
        return Err(Error::dim("panoptic detections must share one canvas"));
    }

    let kept: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].s_cls >= params.min_cls_score)
        .collect();
    let scored: Vec<(BinaryMask, f64)> = kept
        .iter()
        .map(|&i| (dets[i].mask.clone(), dets[i].s_cls * dets[i].s_mask))
        .collect();
    let order: Vec<usize> = mask_nms(&scored, params.nms_iou)?
        .into_iter()
        .map(|k| kept[k])
        .collect();

    // owner per pixel, as a position in `order`
    let mut owner: Vec<Option<usize>> = vec![None; w * h];
    let mut best = vec![f64::NEG_INFINITY; w * h];
    for (rank, &i) in order.iter().enumerate() {
        let s = dets[i].s_cls * dets[i].s_mask;
        if s < params.pixel_score_floor {
            continue;
        }
        for (p, on) in dets[i].mask.to_bitmap().into_iter().enumerate() {
            // strict: earlier (higher-ranked) detections win ties
            if on && s > best[p] {
                best[p] = s;
                owner[p] = Some(rank);
            }
        }
    }

    let mut segments: Vec<(usize, PanopticSegment)> = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        let bits: Vec<bool> = owner.iter().map(|o| *o == Some(rank)).collect();
        let own = BinaryMask::from_bitmap(w, h, &bits)?;
        if own.is_empty() || own.iou(&dets[i].mask)? < params.min_overlap_iou {
            continue;
        }
        if own.area() < params.min_area {
            continue;
        }
        segments.push((
            i,
            PanopticSegment {
                class_id: dets[i].class_id,
                is_thing: dets[i].is_thing,
                mask: own,
            },
        ));
    }

    let mut out: Vec<PanopticSegment> = Vec::new();
    for (_, seg) in segments {
        if !seg.is_thing {
            if let Some(prev) = out.iter_mut().find(|s| !s.is_thing && s.class_id == seg.class_id) {
                prev.mask = prev.mask.map_pixels(&seg.mask, |a, b| a || b)?;
                continue;
            }
        }
        out.push(seg);
    }
    Ok(out)
}
