use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::BENCH_FORMAT;
use super::synthetic::{gen_synthetic, Shape, ShapeKind, SyntheticShapeSpec};
use crate::cost::{compare, CostComparison, CostLedger};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::metrics::{boundary_iou, BinaryMask, BOUNDARY_DILATION};
use crate::ops::ParamSource;
use crate::pipeline::sampler::hash4;
use crate::pipeline::{
    dense_ledger, paste_mask, run_refinement, upsample_nearest, Mode, Model, RoiInput, RunConfig, SyntheticSampler,
    BASE_GRID,
};

/// Smallest tight-box side of a generated shape, so every RoI frame holds
/// at least one pixel per final-grid cell.
const MIN_BOX_SIDE: usize = 112;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub count: usize,
    pub shape: ShapeKind,
    pub canvas: usize,
    pub f0: usize,
    pub stages: u8,
    pub top_n: usize,
    pub seed: u64,
    pub force_dense_active: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            count: 50,
            shape: ShapeKind::Blob,
            canvas: 448,
            f0: 64,
            stages: 3,
            top_n: crate::pipeline::DEFAULT_TOP_N,
            seed: 0,
            force_dense_active: false,
        }
    }
}

impl BenchConfig {
    fn run_config(&self) -> RunConfig {
        RunConfig {
            stages: self.stages,
            top_n: self.top_n,
            seed: self.seed,
            mode: Mode::Oracle,
            f0: self.f0,
            force_dense_active: self.force_dense_active,
            ..RunConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub seed: u64,
    pub shape: Shape,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub dense_macs: u64,
    pub sparse_macs: u64,
    /// Active cells over grid cells, stages 1 and up.
    pub active_fraction: Vec<f64>,
    pub boundary_iou_refined: f64,
    pub boundary_iou_coarse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySummary {
    /// Samples whose refined mask has strictly higher boundary IoU than the
    /// upsampled stage-0 mask.
    pub improved: usize,
    pub count: usize,
    pub improved_fraction: f64,
    pub mean_refined: f64,
    pub mean_coarse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub format: String,
    pub config: BenchConfig,
    pub reduction_fraction: f64,
    pub comparison: CostComparison,
    /// Corpus mean of the active fraction, stages 1 and up.
    pub mean_active_fraction: Vec<f64>,
    pub boundary: BoundarySummary,
    pub samples: Vec<SampleReport>,
}

/// Seed of sample `i` of a corpus.
pub fn sample_seed(seed: u64, i: usize) -> u64 {
    hash4(seed, 0xb3, i as u64, 0)
}

/// Oracle-mode refinement of a seeded shape corpus, one image and one RoI
/// (the tight box) per sample, against the dense pipeline of the same
/// shapes. Dense costs come from [`dense_ledger`].
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.count == 0 {
        return Err(Error::contract("bench needs at least one sample"));
    }
    let rc = cfg.run_config();
    rc.validate()?;
    let params = ParamSource::new(None, cfg.seed);
    let model = Model::load(&params, &rc, cfg.f0, cfg.f0)?;
    let max_reach = (cfg.canvas as f64 / 2.0 - 2.0).min(200.0);
    if max_reach <= MIN_BOX_SIDE as f64 / 2.0 + 2.0 {
        return Err(Error::contract(format!(
            "canvas {} is too small for {MIN_BOX_SIDE}-pixel shapes",
            cfg.canvas
        )));
    }

    let runs: Vec<(SampleReport, CostLedger)> = (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let seed = sample_seed(cfg.seed, i);
            let shape = Shape::random(cfg.shape, MIN_BOX_SIDE, max_reach, seed);
            let spec = SyntheticShapeSpec {
                shape,
                width: cfg.canvas,
                height: cfg.canvas,
                seed,
            };
            let sample = gen_synthetic(&spec)?;
            run_sample(&sample.bbox, &sample.roi_mask, seed, shape, &model, &rc)
        })
        .collect::<Result<_>>()?;

    let mut sparse = CostLedger::new();
    for (_, l) in &runs {
        sparse.merge(l);
    }
    let dense = dense_ledger(&model, &rc, cfg.count);
    let comparison = compare(&dense, &sparse.canonical())?;
    let samples: Vec<SampleReport> = runs.into_iter().map(|(s, _)| s).collect();
    let n = samples.len() as f64;
    let mean_active_fraction = (0..cfg.stages as usize)
        .map(|s| samples.iter().map(|r| r.active_fraction[s]).sum::<f64>() / n)
        .collect();
    let improved = samples
        .iter()
        .filter(|s| s.boundary_iou_refined > s.boundary_iou_coarse)
        .count();
    let boundary = BoundarySummary {
        improved,
        count: samples.len(),
        improved_fraction: improved as f64 / n,
        mean_refined: samples.iter().map(|s| s.boundary_iou_refined).sum::<f64>() / n,
        mean_coarse: samples.iter().map(|s| s.boundary_iou_coarse).sum::<f64>() / n,
    };
    Ok(BenchReport {
        format: BENCH_FORMAT.to_string(),
        config: cfg.clone(),
        reduction_fraction: comparison.reduction_fraction,
        comparison,
        mean_active_fraction,
        boundary,
        samples,
    })
}

fn run_sample(
    bbox: &BBox,
    reference: &BinaryMask,
    seed: u64,
    shape: Shape,
    model: &Model,
    rc: &RunConfig,
) -> Result<(SampleReport, CostLedger)> {
    let roi = RoiInput {
        bbox: *bbox,
        class_id: 0,
        score: 1.0,
        query: None,
        reference: Some(reference.clone()),
    };
    let sampler = SyntheticSampler { seed, channels: rc.f0 };
    let out = run_refinement(std::slice::from_ref(&roi), &sampler, model, rc)?;
    let dense = dense_ledger(model, rc, 1);
    let r = &out.rois[0];
    let active_fraction = r.states[1..]
        .iter()
        .map(|s| s.active_cells as f64 / (s.height * s.width) as f64)
        .collect();

    // compare in the RoI frame
    let (w, h) = (reference.width(), reference.height());
    let frame = BBox::new(0.0, 0.0, w as f64, h as f64)?;
    let side = r.side();
    let refined = paste_mask(r.final_mask(), side, &frame, w, h);
    let mut coarse = r.states[0].mask.clone();
    let mut g = BASE_GRID;
    while g < side {
        coarse = upsample_nearest(&coarse, g, g);
        g *= 2;
    }
    let coarse = paste_mask(&coarse, side, &frame, w, h);
    let report = SampleReport {
        seed,
        shape,
        bbox: *bbox,
        dense_macs: dense.total_macs(),
        sparse_macs: out.ledger.total_macs(),
        active_fraction,
        boundary_iou_refined: boundary_iou(&refined, reference, BOUNDARY_DILATION)?,
        boundary_iou_coarse: boundary_iou(&coarse, reference, BOUNDARY_DILATION)?,
    };
    Ok((report, out.ledger))
}
