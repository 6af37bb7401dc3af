use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalEntry, Geometry};
use crate::error::Result;

/// 0.50, 0.55, ..., 0.95.
pub const IOU_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// Half-open object-area interval `[min, max)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaRange {
    pub min: f64,
    pub max: f64,
}

impl AreaRange {
    pub const ALL: AreaRange = AreaRange {
        min: 0.0,
        max: f64::INFINITY,
    };
    pub const SMALL: AreaRange = AreaRange {
        min: 0.0,
        max: 32.0 * 32.0,
    };
    pub const MEDIUM: AreaRange = AreaRange {
        min: 32.0 * 32.0,
        max: 96.0 * 96.0,
    };
    pub const LARGE: AreaRange = AreaRange {
        min: 96.0 * 96.0,
        max: f64::INFINITY,
    };

    pub fn contains(&self, area: f64) -> bool {
        area >= self.min && area < self.max
    }
}

/// Precision/recall after each counted prediction, and the monotone
/// envelope `p_mod[k] = max_{j >= k} precision[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    pub p_mod: Vec<f64>,
    pub tp: usize,
    pub fp: usize,
    pub num_gt: usize,
}

impl PrCurve {
    fn from_outcomes(outcomes: &[bool], num_gt: usize) -> Self {
        let mut recall = Vec::with_capacity(outcomes.len());
        let mut precision = Vec::with_capacity(outcomes.len());
        let (mut tp, mut fp) = (0usize, 0usize);
        for &hit in outcomes {
            if hit {
                tp += 1;
            } else {
                fp += 1;
            }
            recall.push(tp as f64 / num_gt as f64);
            precision.push(tp as f64 / (tp + fp) as f64);
        }
        let mut p_mod = precision.clone();
        for k in (0..p_mod.len().saturating_sub(1)).rev() {
            p_mod[k] = p_mod[k].max(p_mod[k + 1]);
        }
        PrCurve {
            recall,
            precision,
            p_mod,
            tp,
            fp,
            num_gt,
        }
    }

    /// Area under `r -> max_{r' >= r} p(r')` for the piecewise-linear
    /// precision curve `p` through the points, flat from recall 0 to the
    /// first point and zero past the last one.
    pub fn area(&self) -> f64 {
        let n = self.recall.len();
        if n == 0 {
            return 0.0;
        }
        let mut area = self.recall[0] * self.p_mod[0];
        for k in 0..n - 1 {
            let dr = self.recall[k + 1] - self.recall[k];
            if dr == 0.0 {
                continue;
            }
            let m = self.p_mod[k + 1];
            let pa = self.precision[k];
            let pb = self.precision[k + 1];
            if pa <= m {
                area += dr * m;
            } else {
                // the segment sits above the envelope until it meets it
                let t = (pa - m) / (pa - pb);
                area += dr * (t * (pa + m) / 2.0 + (1.0 - t) * m);
            }
        }
        area
    }
}

/// Per-prediction candidate overlaps, in ranking order.
struct Ranked {
    area: f64,
    cands: Vec<(usize, f64)>,
}

fn rank(
    preds: &[&EvalEntry],
    gts: &[&EvalEntry],
    iou_fn: &dyn Fn(&Geometry, &Geometry) -> Result<f64>,
) -> Result<Vec<Ranked>> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));
    order
        .into_iter()
        .map(|i| {
            let p = preds[i];
            let mut cands = Vec::new();
            for (g, gt) in gts.iter().enumerate() {
                if gt.image_id == p.image_id {
                    cands.push((g, iou_fn(&p.geometry, &gt.geometry)?));
                }
            }
            Ok(Ranked {
                area: p.geometry.area(),
                cands,
            })
        })
        .collect()
}

fn best_unmatched(
    cands: &[(usize, f64)],
    taken: &[bool],
    ignored: &[bool],
    want_ignored: bool,
    thresh: f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(g, v) in cands {
        if taken[g] || ignored[g] != want_ignored || v <= thresh {
            continue;
        }
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((g, v));
        }
    }
    best.map(|b| b.0)
}

/// Greedy matching in ranking order. Ground truths outside `range` are
/// ignored: predictions matching them, and unmatched predictions outside
/// `range`, are not counted. `None` when no ground truth is counted.
fn curve_for(ranked: &[Ranked], gt_areas: &[f64], thresh: f64, range: AreaRange) -> Option<PrCurve> {
    let ignored: Vec<bool> = gt_areas.iter().map(|&a| !range.contains(a)).collect();
    let num_gt = ignored.iter().filter(|&&i| !i).count();
    if num_gt == 0 {
        return None;
    }
    let mut taken = vec![false; gt_areas.len()];
    let mut outcomes = Vec::with_capacity(ranked.len());
    for p in ranked {
        if let Some(g) = best_unmatched(&p.cands, &taken, &ignored, false, thresh) {
            taken[g] = true;
            outcomes.push(true);
        } else if let Some(g) = best_unmatched(&p.cands, &taken, &ignored, true, thresh) {
            taken[g] = true;
        } else if range.contains(p.area) {
            outcomes.push(false);
        }
    }
    Some(PrCurve::from_outcomes(&outcomes, num_gt))
}

/// The precision/recall curve for one class at one IoU threshold, or `None`
/// without ground truths.
pub fn pr_curve(preds: &[EvalEntry], gts: &[EvalEntry], iou_thresh: f64) -> Result<Option<PrCurve>> {
    let p: Vec<&EvalEntry> = preds.iter().collect();
    let g: Vec<&EvalEntry> = gts.iter().collect();
    let ranked = rank(&p, &g, &|a, b| a.iou(b))?;
    let areas: Vec<f64> = gts.iter().map(|g| g.geometry.area()).collect();
    Ok(curve_for(&ranked, &areas, iou_thresh, AreaRange::ALL))
}

/// Average precision of one class's predictions. A prediction is a true
/// positive when its best IoU with a still-unmatched ground truth of the
/// same image exceeds `iou_thresh`. Zero without ground truths.
pub fn ap_single(preds: &[EvalEntry], gts: &[EvalEntry], iou_thresh: f64) -> Result<f64> {
    ap_single_with(preds, gts, iou_thresh, |a, b| a.iou(b))
}

pub fn ap_single_with(
    preds: &[EvalEntry],
    gts: &[EvalEntry],
    iou_thresh: f64,
    iou_fn: impl Fn(&Geometry, &Geometry) -> Result<f64>,
) -> Result<f64> {
    let p: Vec<&EvalEntry> = preds.iter().collect();
    let g: Vec<&EvalEntry> = gts.iter().collect();
    let ranked = rank(&p, &g, &iou_fn)?;
    let areas: Vec<f64> = gts.iter().map(|g| g.geometry.area()).collect();
    Ok(curve_for(&ranked, &areas, iou_thresh, AreaRange::ALL).map_or(0.0, |c| c.area()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    /// `None` when no class has ground truths in the bucket.
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
    pub classes: usize,
}

/// AP averaged over classes with ground truths and over [`IOU_THRESHOLDS`],
/// plus AP50, AP75 and the small/medium/large buckets.
pub fn ap_suite(preds: &[EvalEntry], gts: &[EvalEntry]) -> Result<ApReport> {
    ap_suite_with(preds, gts, |a, b| a.iou(b))
}

/// [`ap_suite`] with a caller-supplied overlap measure.
pub fn ap_suite_with(
    preds: &[EvalEntry],
    gts: &[EvalEntry],
    iou_fn: impl Fn(&Geometry, &Geometry) -> Result<f64> + Sync,
) -> Result<ApReport> {
    for e in preds.iter().chain(gts) {
        e.check()?;
    }
    let classes: BTreeSet<u32> = gts.iter().map(|g| g.class_id).collect();
    let ranges = [AreaRange::ALL, AreaRange::SMALL, AreaRange::MEDIUM, AreaRange::LARGE];

    // per class: [range][threshold] -> Option<ap>
    let per_class: Vec<Vec<Vec<Option<f64>>>> = classes
        .par_iter()
        .map(|&c| {
            let p: Vec<&EvalEntry> = preds.iter().filter(|e| e.class_id == c).collect();
            let g: Vec<&EvalEntry> = gts.iter().filter(|e| e.class_id == c).collect();
            let ranked = rank(&p, &g, &iou_fn)?;
            let areas: Vec<f64> = g.iter().map(|e| e.geometry.area()).collect();
            Ok(ranges
                .iter()
                .map(|&r| {
                    IOU_THRESHOLDS
                        .iter()
                        .map(|&t| curve_for(&ranked, &areas, t, r).map(|c| c.area()))
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mean_at = |range: usize, t: usize| -> Option<f64> {
        let vals: Vec<f64> = per_class.iter().filter_map(|c| c[range][t]).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let mean_over_thresholds = |range: usize| -> Option<f64> {
        let vals: Option<Vec<f64>> = (0..IOU_THRESHOLDS.len()).map(|t| mean_at(range, t)).collect();
        vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(ApReport {
        ap: mean_over_thresholds(0).unwrap_or(0.0),
        ap50: mean_at(0, 0).unwrap_or(0.0),
        ap75: mean_at(0, 5).unwrap_or(0.0),
        ap_s: mean_over_thresholds(1),
        ap_m: mean_over_thresholds(2),
        ap_l: mean_over_thresholds(3),
        classes: classes.len(),
    })
}
