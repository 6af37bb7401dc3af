//! Detection and segmentation metrics: COCO-style AP with size buckets,
//! boundary IoU and panoptic quality.

mod ap;
mod boundary;
mod mask;
mod pq;

pub use ap::{
    ap_single, ap_single_with, ap_suite, ap_suite_with, pr_curve, ApReport, AreaRange, PrCurve, IOU_THRESHOLDS,
};
pub use boundary::{band, boundary_iou, boundary_width, BOUNDARY_DILATION};
pub use mask::{rle_decode, rle_encode, BinaryMask};
pub use pq::{pq, Categories, ClassPq, PanopticImage, PanopticSegment, PqReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

/// The shape an evaluation entry is scored by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Box(BBox),
    Mask(BinaryMask),
}

impl Geometry {
    /// Pixel count for masks, box area otherwise.
    pub fn area(&self) -> f64 {
        match self {
            Geometry::Box(b) => b.area(),
            Geometry::Mask(m) => m.area() as f64,
        }
    }

    pub fn iou(&self, other: &Geometry) -> Result<f64> {
        match (self, other) {
            (Geometry::Box(a), Geometry::Box(b)) => Ok(iou(a, b)),
            (Geometry::Mask(a), Geometry::Mask(b)) => a.iou(b),
            _ => Err(Error::contract("cannot compare a box with a mask")),
        }
    }
}

/// A scored prediction or a ground truth (whose score is ignored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub image_id: u64,
    #[serde(rename = "class")]
    pub class_id: u32,
    #[serde(default = "one")]
    pub score: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub iscrowd: bool,
    pub geometry: Geometry,
}

fn one() -> f64 {
    1.0
}

impl EvalEntry {
    pub fn new(image_id: u64, class_id: u32, score: f64, geometry: Geometry) -> Self {
        EvalEntry {
            image_id,
            class_id,
            score,
            iscrowd: false,
            geometry,
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::format(format!("score {} outside [0, 1]", self.score)));
        }
        if self.iscrowd {
            return Err(Error::format("crowd annotations are not supported"));
        }
        Ok(())
    }
}
