//! Boxes, anchors, box encodings, matching and duplicate removal.

mod anchors;
mod bbox;
pub mod matching;
mod nms;

pub use anchors::{gen_anchors, Anchor, AnchorSpec};
pub use bbox::{decode_box, encode_box, iou, iou_variants, BBox, BoxDeltas, IouVariants};
pub use matching::{topk_match, upbnd_removal, AnchorLabel, MatchResult, TOPK_DETECTION, TOPK_SELECTION};
pub use nms::{mask_nms, multiclass_inference, nms, ClassDetection, MAX_DETECTIONS, NMS_065, NMS_070, NMS_DEFAULT};
