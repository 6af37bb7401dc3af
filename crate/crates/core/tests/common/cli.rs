//! Driving the command-line binary on generated inputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::Rng;
use serde_json::{json, Value};

use super::rng;
use sparseseg::metrics::BinaryMask;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sparseseg"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("SPSR_")) {
        c.env_remove(k);
    }
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn write_json(path: &Path, v: &Value) {
    std::fs::write(path, serde_json::to_vec_pretty(v).unwrap()).unwrap();
}

fn ellipse(w: usize, h: usize, fx: f64, fy: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| {
        let dx = (x as f64 + 0.5 - w as f64 / 2.0) / (fx * w as f64);
        let dy = (y as f64 + 0.5 - h as f64 / 2.0) / (fy * h as f64);
        dx * dx + dy * dy <= 1.0
    })
}

/// Seeded RoI and reference-mask files for `refine`, written into `dir`.
/// Returns their paths.
pub fn refine_inputs(dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let mut r = rng(seed);
    let mut images = Vec::new();
    let mut masks = Vec::new();
    for image_id in 0..2u64 {
        let (iw, ih) = (400usize, 360usize);
        let mut rois = Vec::new();
        for roi in 0..r.random_range(1..4usize) {
            let (w, h) = (r.random_range(112..220) as f64, r.random_range(112..200) as f64);
            let (x, y) = (r.random_range(0.0..iw as f64 - w), r.random_range(0.0..ih as f64 - h));
            rois.push(json!({"box": [x, y, x + w, y + h], "class": roi as u32 % 3, "score": r.random::<f64>()}));
            let m = ellipse(
                w as usize,
                h as usize,
                r.random_range(0.2..0.5),
                r.random_range(0.2..0.5),
            );
            masks.push(json!({"image_id": image_id, "roi": roi, "mask": m}));
        }
        images.push(json!({"image_id": image_id, "width": iw, "height": ih, "rois": rois}));
    }
    let rois = dir.join("rois.json");
    let refs = dir.join("refs.json");
    write_json(&rois, &json!({"format": "sps-rois/1", "images": images}));
    write_json(&refs, &json!({"format": "sps-rle/1", "masks": masks}));
    (rois, refs)
}
