use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[x0, y0, x1, y1]` in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::format("box coordinates must be finite"));
        }
        if x1 < x0 || y1 < y0 {
            return Err(Error::format(format!(
                "box [{x0}, {y0}, {x1}, {y1}] has negative extent"
            )));
        }
        Ok(BBox { x0, y0, x1, y1 })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox {
            x0: cx - w / 2.0,
            y0: cy - h / 2.0,
            x1: cx + w / 2.0,
            y1: cy + h / 2.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let w = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let h = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        w * h
    }

    /// Smallest box enclosing both.
    pub fn enclosing(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }
}

/// Intersection over union; zero when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Penalized IoU scores used as box-regression objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IouVariants {
    pub iou: f64,
    pub giou: f64,
    pub diou: f64,
    pub ciou: f64,
    pub eiou: f64,
}

/// GIoU, DIoU, CIoU and EIoU of `pred` against `target`. All penalty terms
/// vanish for identical boxes. Terms with a zero denominator (degenerate
/// enclosing box) are taken as zero.
pub fn iou_variants(pred: &BBox, target: &BBox) -> IouVariants {
    let base = iou(pred, target);
    let enc = pred.enclosing(target);
    let (cw, ch) = (enc.width(), enc.height());
    let c_area = enc.area();
    let union = pred.area() + target.area() - pred.intersection(target);

    let giou = if c_area > 0.0 {
        base - (c_area - union) / c_area
    } else {
        base
    };

    let (px, py) = pred.center();
    let (tx, ty) = target.center();
    let rho2 = (px - tx).powi(2) + (py - ty).powi(2);
    let diag2 = cw * cw + ch * ch;
    let center_term = if diag2 > 0.0 { rho2 / diag2 } else { 0.0 };
    let diou = base - center_term;

    let v = 4.0 / (PI * PI) * (target.width().atan2(target.height()) - pred.width().atan2(pred.height())).powi(2);
    let alpha = if v > 0.0 { v / ((1.0 - base) + v) } else { 0.0 };
    let ciou = diou - alpha * v;

    let w_term = if cw > 0.0 {
        (pred.width() - target.width()).powi(2) / (cw * cw)
    } else {
        0.0
    };
    let h_term = if ch > 0.0 {
        (pred.height() - target.height()).powi(2) / (ch * ch)
    } else {
        0.0
    };
    let eiou = diou - w_term - h_term;

    IouVariants {
        iou: base,
        giou,
        diou,
        ciou,
        eiou,
    }
}

/// Box deltas relative to an anchor: center offsets normalized by the
/// anchor size and log size ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxDeltas {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
}

pub fn encode_box(anchor: &BBox, target: &BBox) -> Result<BoxDeltas> {
    let (aw, ah) = (anchor.width(), anchor.height());
    if aw <= 0.0 || ah <= 0.0 {
        return Err(Error::contract("anchor must have positive width and height"));
    }
    let (gw, gh) = (target.width(), target.height());
    if gw <= 0.0 || gh <= 0.0 {
        return Err(Error::contract("target must have positive width and height"));
    }
    let (ax, ay) = anchor.center();
    let (gx, gy) = target.center();
    Ok(BoxDeltas {
        dx: (gx - ax) / aw,
        dy: (gy - ay) / ah,
        dw: (gw / aw).ln(),
        dh: (gh / ah).ln(),
    })
}

pub fn decode_box(anchor: &BBox, d: &BoxDeltas) -> Result<BBox> {
    let (aw, ah) = (anchor.width(), anchor.height());
    if aw <= 0.0 || ah <= 0.0 {
        return Err(Error::contract("anchor must have positive width and height"));
    }
    let (ax, ay) = anchor.center();
    let cx = ax + d.dx * aw;
    let cy = ay + d.dy * ah;
    Ok(BBox::from_center(cx, cy, aw * d.dw.exp(), ah * d.dh.exp()))
}
