//! Random metric and geometry instances with brute-force references.

use rand::Rng;

use super::rng;
use sparseseg::geometry::{iou, AnchorLabel, BBox, MatchResult};
use sparseseg::metrics::{ap_suite, pq, BinaryMask, Categories, EvalEntry, Geometry, PanopticImage, PanopticSegment};

pub fn rand_box(r: &mut impl Rng, canvas: f64) -> BBox {
    let x0 = r.random_range(0.0..canvas * 0.9);
    let y0 = r.random_range(0.0..canvas * 0.9);
    let w = r.random_range(2.0..canvas * 0.4);
    let h = r.random_range(2.0..canvas * 0.4);
    BBox::new(x0, y0, x0 + w, y0 + h).unwrap()
}

/// Jitters a box by up to `frac` of its size.
pub fn jitter(r: &mut impl Rng, b: &BBox, frac: f64) -> BBox {
    let (w, h) = (b.width(), b.height());
    let mut d = |s: f64| r.random_range(-frac * s..=frac * s);
    let x0 = b.x0 + d(w);
    let y0 = b.y0 + d(h);
    let x1 = (b.x1 + d(w)).max(x0 + 1.0);
    let y1 = (b.y1 + d(h)).max(y0 + 1.0);
    BBox::new(x0, y0, x1, y1).unwrap()
}

/// Multi-image, multi-class box detections: jittered copies of ground
/// truths plus unrelated false positives, with random scores.
pub fn ap_instance(seed: u64) -> (Vec<EvalEntry>, Vec<EvalEntry>) {
    let mut r = rng(seed);
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for img in 0..r.random_range(1..4u64) {
        for _ in 0..r.random_range(0..6) {
            let class = r.random_range(0..3u32);
            // spans the size buckets
            let canvas = [40.0, 150.0, 400.0][r.random_range(0..3)];
            let b = rand_box(&mut r, canvas);
            gts.push(EvalEntry::new(img, class, 1.0, Geometry::Box(b)));
            for _ in 0..r.random_range(0..3) {
                let p = jitter(&mut r, &b, 0.2);
                preds.push(EvalEntry::new(img, class, r.random_range(0.0..1.0), Geometry::Box(p)));
            }
        }
        for _ in 0..r.random_range(0..4) {
            let b = rand_box(&mut r, 400.0);
            let class = r.random_range(0..3u32);
            preds.push(EvalEntry::new(img, class, r.random_range(0.0..1.0), Geometry::Box(b)));
        }
    }
    (preds, gts)
}

/// A pixel-disjoint segmentation: rectangles painted in order over a
/// canvas, each label region one segment.
fn paint(r: &mut impl Rng, w: usize, h: usize, labels: &mut [u32], n: usize) {
    for _ in 0..n {
        let x0 = r.random_range(0..w);
        let y0 = r.random_range(0..h);
        let x1 = r.random_range(x0 + 1..=w);
        let y1 = r.random_range(y0 + 1..=h);
        let class = r.random_range(1..=4u32);
        let id = (r.random_range(0..1u32 << 20) << 3) | class;
        for y in y0..y1 {
            for x in x0..x1 {
                labels[y * w + x] = id;
            }
        }
    }
}

/// Classes 1 and 2 are things, 3 and 4 stuff.
pub fn is_thing(class: u32) -> bool {
    class <= 2
}

fn segments(w: usize, h: usize, labels: &[u32]) -> Vec<PanopticSegment> {
    let mut ids: Vec<u32> = labels.iter().copied().filter(|&l| l != 0).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let mask = BinaryMask::from_bitmap(w, h, &labels.iter().map(|&l| l == id).collect::<Vec<_>>()).unwrap();
            PanopticSegment {
                class_id: id & 7,
                is_thing: is_thing(id & 7),
                mask,
            }
        })
        .collect()
}

/// Ground truth and a perturbed prediction, both pixel-disjoint.
pub fn pq_instance(seed: u64) -> (Vec<PanopticImage>, Vec<PanopticImage>) {
    let mut r = rng(seed);
    let (w, h) = (24, 20);
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for img in 0..r.random_range(1..3u64) {
        let mut g = vec![0u32; w * h];
        let n = r.random_range(1..7);
        paint(&mut r, w, h, &mut g, n);
        let mut p = g.clone();
        let n = r.random_range(0..4);
        paint(&mut r, w, h, &mut p, n);
        gts.push(PanopticImage {
            image_id: img,
            segments: segments(w, h, &g),
        });
        preds.push(PanopticImage {
            image_id: img,
            segments: segments(w, h, &p),
        });
    }
    (preds, gts)
}

pub fn rand_mask(r: &mut impl Rng, w: usize, h: usize) -> BinaryMask {
    let p: f64 = r.random_range(0.0..1.0);
    let bits: Vec<bool> = (0..w * h).map(|_| r.random_bool(p)).collect();
    BinaryMask::from_bitmap(w, h, &bits).unwrap()
}

/// Union of random rectangles, so masks have real boundaries.
pub fn rand_blocky_mask(r: &mut impl Rng, w: usize, h: usize) -> BinaryMask {
    let mut bits = vec![false; w * h];
    for _ in 0..r.random_range(1..4) {
        let x0 = r.random_range(0..w);
        let y0 = r.random_range(0..h);
        let x1 = r.random_range(x0 + 1..=w);
        let y1 = r.random_range(y0 + 1..=h);
        for y in y0..y1 {
            for x in x0..x1 {
                bits[y * w + x] = true;
            }
        }
    }
    BinaryMask::from_bitmap(w, h, &bits).unwrap()
}

/// Foreground pixels with a background pixel (or the canvas edge) within
/// Chebyshev distance `d`, by direct search.
pub fn brute_band(m: &BinaryMask, d: usize) -> Vec<bool> {
    let (w, h) = (m.width() as isize, m.height() as isize);
    let bits = m.to_bitmap();
    let d = d as isize;
    let mut out = vec![false; bits.len()];
    for y in 0..h {
        for x in 0..w {
            if !bits[(y * w + x) as usize] {
                continue;
            }
            let mut near_bg = false;
            for dy in -d..=d {
                for dx in -d..=d {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy < 0 || xx < 0 || yy >= h || xx >= w || !bits[(yy * w + xx) as usize] {
                        near_bg = true;
                    }
                }
            }
            out[(y * w + x) as usize] = near_bg;
        }
    }
    out
}

/// Area under the running-max envelope of the piecewise-linear
/// precision/recall curve, by dense sampling.
pub fn sampled_ap(recall: &[f64], precision: &[f64], samples: usize) -> f64 {
    if recall.is_empty() {
        return 0.0;
    }
    let last = *recall.last().unwrap();
    let p_at = |r: f64| -> f64 {
        // max over all curve points at this recall (vertical segments)
        let mut best = f64::NEG_INFINITY;
        for k in 0..recall.len() {
            if recall[k] == r {
                best = best.max(precision[k]);
            }
            if k + 1 < recall.len() && recall[k] < r && r < recall[k + 1] {
                let t = (r - recall[k]) / (recall[k + 1] - recall[k]);
                best = best.max(precision[k] + t * (precision[k + 1] - precision[k]));
            }
        }
        best
    };
    let step = 1.0 / samples as f64;
    let mut running = f64::NEG_INFINITY;
    let mut env = vec![0.0; samples];
    for j in (0..samples).rev() {
        let r = (j as f64 + 0.5) * step;
        if r > last {
            continue;
        }
        if r >= recall[0] {
            running = running.max(p_at(r));
        }
        env[j] = running;
    }
    // jumps between two samples are caught by the point maximum
    let head = precision.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    env.iter()
        .enumerate()
        .map(|(j, &v)| {
            let r = (j as f64 + 0.5) * step;
            if r > last {
                0.0
            } else if r < recall[0] {
                head
            } else {
                v.max(p_at_points(recall, precision, r))
            }
        })
        .sum::<f64>()
        * step
}

fn p_at_points(recall: &[f64], precision: &[f64], r: f64) -> f64 {
    recall
        .iter()
        .zip(precision)
        .filter(|(&rk, _)| rk >= r)
        .map(|(_, &p)| p)
        .fold(0.0, f64::max)
}

/// Clustered scored boxes, so that suppression actually triggers.
pub fn nms_instance(seed: u64) -> Vec<(BBox, f64)> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    for _ in 0..r.random_range(1..6) {
        let c = rand_box(&mut r, 200.0);
        for _ in 0..r.random_range(1..8) {
            let s = (r.random_range(0..20) as f64) / 20.0;
            out.push((jitter(&mut r, &c, 0.3), s));
        }
    }
    out
}

/// Kept set is in score order, pairwise at most `thresh`, and every dropped
/// box overlaps a higher-ranked kept box beyond `thresh`.
pub fn check_nms(dets: &[(BBox, f64)], thresh: f64, kept: &[usize]) -> Result<(), String> {
    let before = |a: usize, b: usize| dets[a].1 > dets[b].1 || (dets[a].1 == dets[b].1 && a < b);
    for w in kept.windows(2) {
        if !before(w[0], w[1]) {
            return Err(format!("kept out of order: {} then {}", w[0], w[1]));
        }
    }
    for (i, &a) in kept.iter().enumerate() {
        for &b in &kept[i + 1..] {
            let v = iou(&dets[a].0, &dets[b].0);
            if v > thresh {
                return Err(format!("kept {a} and {b} overlap at {v}"));
            }
        }
    }
    for d in (0..dets.len()).filter(|d| !kept.contains(d)) {
        let covered = kept
            .iter()
            .any(|&k| before(k, d) && iou(&dets[k].0, &dets[d].0) > thresh);
        if !covered {
            return Err(format!("{d} dropped without a suppressor"));
        }
    }
    Ok(())
}

/// Anchors on a regular grid of three sizes plus a few ground truths.
pub fn match_instance(seed: u64) -> (Vec<BBox>, Vec<BBox>) {
    let mut r = rng(seed);
    let mut anchors = Vec::new();
    for s in [16.0, 32.0, 64.0] {
        let mut y = 0.0;
        while y < 128.0 {
            let mut x = 0.0;
            while x < 128.0 {
                anchors.push(BBox::from_center(x + 8.0, y + 8.0, s, s));
                x += 16.0;
            }
            y += 16.0;
        }
    }
    let gts = (0..r.random_range(1..5)).map(|_| rand_box(&mut r, 128.0)).collect();
    (anchors, gts)
}

/// Counting form of top-k matching: anchor `a` is nominated by `g` when it
/// overlaps `g` and fewer than `k` anchors precede it in (IoU desc, index
/// asc) order; among nominating ground truths the highest IoU wins, ties to
/// the lower index.
pub fn naive_topk(anchors: &[BBox], gts: &[BBox], k: usize) -> MatchResult {
    let nominated = |a: usize, g: usize| {
        let v = iou(&anchors[a], &gts[g]);
        let ahead = (0..anchors.len())
            .filter(|&b| {
                let w = iou(&anchors[b], &gts[g]);
                w > 0.0 && (w > v || (w == v && b < a))
            })
            .count();
        v > 0.0 && ahead < k
    };
    let mut per_gt = vec![Vec::new(); gts.len()];
    let labels = (0..anchors.len())
        .map(|a| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if nominated(a, g) {
                    let v = iou(&anchors[a], gt);
                    if best.is_none_or(|(_, bv)| v > bv) {
                        best = Some((g, v));
                    }
                }
            }
            match best {
                Some((g, _)) => {
                    per_gt[g].push(a);
                    AnchorLabel::Positive(g)
                }
                None => AnchorLabel::Negative,
            }
        })
        .collect();
    MatchResult { labels, per_gt }
}

pub fn block(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y))
}

fn thing(class: u32, mask: BinaryMask) -> PanopticSegment {
    PanopticSegment {
        class_id: class,
        is_thing: true,
        mask,
    }
}

/// One match at IoU 0.8, one missed ground truth, one spurious prediction.
pub fn pq_toy() -> (Vec<PanopticImage>, Vec<PanopticImage>) {
    let gts = vec![PanopticImage {
        image_id: 0,
        segments: vec![
            thing(1, block(20, 20, 0, 0, 10, 10)),
            thing(1, block(20, 20, 12, 12, 16, 16)),
        ],
    }];
    let preds = vec![PanopticImage {
        image_id: 0,
        segments: vec![
            thing(1, block(20, 20, 0, 0, 8, 10)),
            thing(1, block(20, 20, 0, 12, 4, 16)),
        ],
    }];
    (preds, gts)
}

fn boxed(img: u64, score: f64, x0: f64) -> EvalEntry {
    EvalEntry::new(
        img,
        0,
        score,
        Geometry::Box(BBox::new(x0, 0.0, x0 + 10.0, 10.0).unwrap()),
    )
}

/// Two ground truths; scores 0.9 hit, 0.8 miss, 0.7 hit, all at IoU 1 or 0.
pub fn hand_ap_instance() -> (Vec<EvalEntry>, Vec<EvalEntry>) {
    let gts = vec![boxed(0, 1.0, 0.0), boxed(0, 1.0, 100.0)];
    let preds = vec![boxed(0, 0.9, 0.0), boxed(0, 0.8, 50.0), boxed(0, 0.7, 100.0)];
    (preds, gts)
}

/// Squashing scores through an increasing map leaves every AP unchanged.
pub fn check_rescoring(seed: u64) -> Result<(), String> {
    let (preds, gts) = ap_instance(seed);
    let a = ap_suite(&preds, &gts).map_err(|e| e.to_string())?;
    let squashed: Vec<EvalEntry> = preds
        .iter()
        .map(|p| EvalEntry {
            score: p.score.powi(3) * 0.5 + 0.25,
            ..p.clone()
        })
        .collect();
    let b = ap_suite(&squashed, &gts).map_err(|e| e.to_string())?;
    if a != b {
        return Err(format!("seed {seed}: {a:?} vs {b:?}"));
    }
    Ok(())
}

/// Removing a prediction that overlaps no ground truth never lowers any AP.
/// Returns false when the instance has no such prediction.
pub fn check_fp_deletion(seed: u64) -> Result<bool, String> {
    let (preds, gts) = ap_instance(seed);
    let fps: Vec<usize> = (0..preds.len())
        .filter(|&i| {
            gts.iter()
                .filter(|g| g.image_id == preds[i].image_id)
                .all(|g| g.geometry.iou(&preds[i].geometry).unwrap() == 0.0)
        })
        .collect();
    if fps.is_empty() {
        return Ok(false);
    }
    let before = ap_suite(&preds, &gts).map_err(|e| e.to_string())?;
    let mut rest = preds.clone();
    rest.remove(fps[seed as usize % fps.len()]);
    let after = ap_suite(&rest, &gts).map_err(|e| e.to_string())?;
    let pairs = [
        (Some(after.ap), Some(before.ap)),
        (Some(after.ap50), Some(before.ap50)),
        (Some(after.ap75), Some(before.ap75)),
        (after.ap_s, before.ap_s),
        (after.ap_m, before.ap_m),
        (after.ap_l, before.ap_l),
    ];
    if pairs.iter().any(|(x, y)| x.unwrap_or(0.0) < y.unwrap_or(0.0)) {
        return Err(format!("seed {seed}: {before:?} -> {after:?}"));
    }
    Ok(true)
}

/// Per class and overall, PQ equals SQ times RQ.
pub fn check_pq_identity(seed: u64) -> Result<(), String> {
    let (preds, gts) = pq_instance(seed);
    let cats = Categories::from_images(gts.iter().chain(&preds)).map_err(|e| e.to_string())?;
    let r = pq(&preds, &gts, &cats).map_err(|e| e.to_string())?;
    for (class, c) in &r.per_class {
        if (c.pq - c.sq * c.rq).abs() > 1e-12 || !(0.0..=1.0).contains(&c.pq) {
            return Err(format!("seed {seed} class {class}: {c:?}"));
        }
    }
    Ok(())
}
