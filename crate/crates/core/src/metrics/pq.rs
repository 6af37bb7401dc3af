use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanopticSegment {
    #[serde(rename = "class")]
    pub class_id: u32,
    pub is_thing: bool,
    #[serde(rename = "rle")]
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanopticImage {
    pub image_id: u64,
    pub segments: Vec<PanopticSegment>,
}

/// Thing and stuff class ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Categories {
    pub things: BTreeSet<u32>,
    pub stuff: BTreeSet<u32>,
}

impl Categories {
    /// Collects classes from the `is_thing` flags of the given images.
    pub fn from_images<'a>(images: impl IntoIterator<Item = &'a PanopticImage>) -> Result<Self> {
        let mut c = Categories::default();
        for s in images.into_iter().flat_map(|i| &i.segments) {
            if s.is_thing {
                c.things.insert(s.class_id);
            } else {
                c.stuff.insert(s.class_id);
            }
        }
        if let Some(x) = c.things.intersection(&c.stuff).next() {
            return Err(Error::format(format!("class {x} is marked both thing and stuff")));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassPq {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub iou_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqReport {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub pq_thing: Option<f64>,
    pub sq_thing: Option<f64>,
    pub rq_thing: Option<f64>,
    pub pq_stuff: Option<f64>,
    pub sq_stuff: Option<f64>,
    pub rq_stuff: Option<f64>,
    pub per_class: BTreeMap<u32, ClassPq>,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    tp: usize,
    fp: usize,
    fn_: usize,
    iou_sum: f64,
}

impl Tally {
    fn finish(self) -> ClassPq {
        let denom = self.tp as f64 + 0.5 * self.fp as f64 + 0.5 * self.fn_ as f64;
        let (pq, rq) = if denom > 0.0 {
            (self.iou_sum / denom, self.tp as f64 / denom)
        } else {
            (0.0, 0.0)
        };
        let sq = if self.tp > 0 {
            self.iou_sum / self.tp as f64
        } else {
            0.0
        };
        ClassPq {
            pq,
            sq,
            rq,
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            iou_sum: self.iou_sum,
        }
    }
}

fn check_disjoint(img: &PanopticImage, what: &str) -> Result<()> {
    let segs = &img.segments;
    for i in 0..segs.len() {
        for j in i + 1..segs.len() {
            if segs[i].mask.intersection_area(&segs[j].mask)? > 0 {
                return Err(Error::contract(format!(
                    "{what} segments {i} and {j} of image {} overlap",
                    img.image_id
                )));
            }
        }
    }
    Ok(())
}

/// Panoptic quality. Segments of the same class match when their IoU
/// exceeds 0.5; per class `PQ = sum IoU / (TP + FP/2 + FN/2)`. Averages run
/// over classes that appear in the ground truth.
pub fn pq(preds: &[PanopticImage], gts: &[PanopticImage], cats: &Categories) -> Result<PqReport> {
    let mut by_image: BTreeMap<u64, (Option<&PanopticImage>, Option<&PanopticImage>)> = BTreeMap::new();
    for p in preds {
        check_disjoint(p, "predicted")?;
        let e = by_image.entry(p.image_id).or_default();
        if e.0.replace(p).is_some() {
            return Err(Error::format(format!("image {} predicted twice", p.image_id)));
        }
    }
    for g in gts {
        check_disjoint(g, "ground-truth")?;
        let e = by_image.entry(g.image_id).or_default();
        if e.1.replace(g).is_some() {
            return Err(Error::format(format!("image {} annotated twice", g.image_id)));
        }
    }
    for s in preds.iter().chain(gts).flat_map(|i| &i.segments) {
        if !cats.things.contains(&s.class_id) && !cats.stuff.contains(&s.class_id) {
            return Err(Error::format(format!(
                "class {} is neither thing nor stuff",
                s.class_id
            )));
        }
    }

    let mut tallies: BTreeMap<u32, Tally> = BTreeMap::new();
    let mut gt_classes: BTreeSet<u32> = BTreeSet::new();
    for (p, g) in by_image.values() {
        let ps: &[PanopticSegment] = p.map_or(&[], |i| &i.segments);
        let gs: &[PanopticSegment] = g.map_or(&[], |i| &i.segments);
        gt_classes.extend(gs.iter().map(|s| s.class_id));
        let mut p_used = vec![false; ps.len()];
        let mut g_used = vec![false; gs.len()];
        for (gi, gseg) in gs.iter().enumerate() {
            for (pi, pseg) in ps.iter().enumerate() {
                if p_used[pi] || pseg.class_id != gseg.class_id {
                    continue;
                }
                let v = pseg.mask.iou(&gseg.mask)?;
                if v > 0.5 {
                    p_used[pi] = true;
                    g_used[gi] = true;
                    let t = tallies.entry(gseg.class_id).or_default();
                    t.tp += 1;
                    t.iou_sum += v;
                    break;
                }
            }
        }
        for (gi, gseg) in gs.iter().enumerate() {
            if !g_used[gi] {
                tallies.entry(gseg.class_id).or_default().fn_ += 1;
            }
        }
        for (pi, pseg) in ps.iter().enumerate() {
            if !p_used[pi] {
                tallies.entry(pseg.class_id).or_default().fp += 1;
            }
        }
    }

    let per_class: BTreeMap<u32, ClassPq> = tallies.iter().map(|(&c, t)| (c, t.finish())).collect();
    let average = |filter: &dyn Fn(u32) -> bool| -> Option<(f64, f64, f64)> {
        let sel: Vec<&ClassPq> = gt_classes
            .iter()
            .filter(|&&c| filter(c))
            .map(|c| &per_class[c])
            .collect();
        if sel.is_empty() {
            return None;
        }
        let n = sel.len() as f64;
        Some((
            sel.iter().map(|c| c.pq).sum::<f64>() / n,
            sel.iter().map(|c| c.sq).sum::<f64>() / n,
            sel.iter().map(|c| c.rq).sum::<f64>() / n,
        ))
    };
    let all = average(&|_| true).unwrap_or((0.0, 0.0, 0.0));
    let th = average(&|c| cats.things.contains(&c));
    let st = average(&|c| cats.stuff.contains(&c));
    Ok(PqReport {
        pq: all.0,
        sq: all.1,
        rq: all.2,
        pq_thing: th.map(|t| t.0),
        sq_thing: th.map(|t| t.1),
        rq_thing: th.map(|t| t.2),
        pq_stuff: st.map(|t| t.0),
        sq_stuff: st.map(|t| t.1),
        rq_stuff: st.map(|t| t.2),
        per_class,
    })
}
