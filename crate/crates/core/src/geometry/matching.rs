use super::{iou, BBox};

/// `k` used when labeling anchors for the selection stage.
pub const TOPK_SELECTION: usize = 5;
/// `k` used when labeling queries for classification and box regression.
pub const TOPK_DETECTION: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorLabel {
    Positive(usize),
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    pub labels: Vec<AnchorLabel>,
    /// Anchors assigned to each ground truth, ascending.
    pub per_gt: Vec<Vec<usize>>,
}

/// Static top-k matching. Each ground truth nominates its `k` highest-IoU
/// anchors with positive overlap (ties by lower anchor index); an anchor
/// nominated by several ground truths goes to the one with the higher IoU
/// (ties by lower ground-truth index). Depends only on geometry.
pub fn topk_match(anchors: &[BBox], gts: &[BBox], k: usize) -> MatchResult {
    let mut best: Vec<Option<(usize, f64)>> = vec![None; anchors.len()];
    for (g, gt) in gts.iter().enumerate() {
        let mut scored: Vec<(usize, f64)> = anchors
            .iter()
            .enumerate()
            .map(|(a, anchor)| (a, iou(anchor, gt)))
            .filter(|&(_, v)| v > 0.0)
            .collect();
        scored.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        for &(a, v) in scored.iter().take(k) {
            match best[a] {
                Some((_, cur)) if cur >= v => {}
                _ => best[a] = Some((g, v)),
            }
        }
    }
    let mut per_gt = vec![Vec::new(); gts.len()];
    let labels = best
        .iter()
        .enumerate()
        .map(|(a, b)| match b {
            Some((g, _)) => {
                per_gt[*g].push(a);
                AnchorLabel::Positive(*g)
            }
            None => AnchorLabel::Negative,
        })
        .collect();
    MatchResult { labels, per_gt }
}

/// Ground-truth-assisted duplicate removal giving an upper bound on what
/// duplicate removal can achieve. In score order, a detection is removed when
/// it overlaps no still-unmatched ground truth by at least `overlap_thresh`
/// and has IoU of at least 0.5 with a kept higher-scoring detection.
/// Detections that do overlap an unmatched ground truth claim the best one.
pub fn upbnd_removal(dets: &[(BBox, f64)], gts: &[BBox], overlap_thresh: f64) -> Vec<usize> {
    let order = score_order(dets.iter().map(|d| d.1));
    let mut matched = vec![false; gts.len()];
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let b = &dets[i].0;
        let best = gts
            .iter()
            .enumerate()
            .filter(|(g, _)| !matched[*g])
            .map(|(g, gt)| (g, iou(b, gt)))
            .fold(None, |acc: Option<(usize, f64)>, (g, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((g, v)),
            });
        if let Some((g, v)) = best {
            if v >= overlap_thresh {
                matched[g] = true;
                kept.push(i);
                continue;
            }
        }
        let duplicate = kept.iter().any(|&j| iou(b, &dets[j].0) >= 0.5);
        if !duplicate {
            kept.push(i);
        }
    }
    kept
}

/// Indices sorted by descending score, ties by ascending index.
pub(crate) fn score_order(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}
