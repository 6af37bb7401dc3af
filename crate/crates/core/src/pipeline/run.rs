use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::assemble::{assemble_mask, sigmoid};
use super::config::{Mode, RunConfig, StageConfig, BASE_GRID};
use super::level::{assign_level, stage_level};
use super::model::{Model, StageWeights};
use super::sampler::{cell_center, hash4, roi_align, unit, FeatureSampler};
use super::score::{seg_score, ScoreInputs};
use super::select::{select_active, CandidateScores};
use super::targets::{make_targets, CellTargets};
use crate::cost::{macs_bilinear, macs_conv, macs_linear, CostLedger};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::metrics::BinaryMask;
use crate::ops::dense::{conv2d_dense, fuse_external_dense, halve_dense, sfm_dense, subdivide_dense};
use crate::ops::{fuse_external, halve_features, sfm, Mlp};
use crate::tensor::{CellCoord, DenseTensor, FeatureTransform, SpsTensor};

/// Logit magnitude written by the oracle heads.
pub const ORACLE_LOGIT: f32 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiInput {
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(rename = "class")]
    pub class_id: u32,
    pub score: f64,
    /// Query feature; synthesized from the run seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<Vec<f32>>,
    /// Reference mask in the RoI frame, required in oracle mode.
    #[serde(skip)]
    pub reference: Option<BinaryMask>,
}

/// What one RoI looked like after a stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementState {
    pub stage: u8,
    pub height: usize,
    pub width: usize,
    pub features: usize,
    /// Cells computed at this stage.
    pub active_cells: usize,
    pub passive_rows: usize,
    /// Row-major probabilities.
    pub mask: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiResult {
    pub states: Vec<RefinementState>,
    pub score: f64,
}

impl RoiResult {
    pub fn final_mask(&self) -> &[f32] {
        &self.states.last().expect("stage 0 always runs").mask
    }

    pub fn side(&self) -> usize {
        self.states.last().expect("stage 0 always runs").width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub rois: Vec<RoiResult>,
    pub ledger: CostLedger,
}

enum Features {
    Dense(DenseTensor),
    Sparse(SpsTensor),
}

struct RoiState {
    features: Features,
    /// Cells that received predictions at the last stage, with their scores.
    candidates: CandidateScores,
    states: Vec<RefinementState>,
    ledger: CostLedger,
}

fn check_inputs(rois: &[RoiInput], sampler: &dyn FeatureSampler, model: &Model, cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    if model.f0 != cfg.f0 || model.stages.len() != cfg.stages as usize {
        return Err(Error::dim("model shapes do not match the run config"));
    }
    if sampler.channels() != model.f0 || model.channels != model.f0 {
        return Err(Error::dim(format!(
            "neck features have {} channels, the head expects {}",
            sampler.channels(),
            model.f0
        )));
    }
    for (i, r) in rois.iter().enumerate() {
        if r.bbox.width() <= 0.0 || r.bbox.height() <= 0.0 {
            return Err(Error::contract(format!("RoI {i} has an empty box")));
        }
        if let Some(q) = &r.query {
            if q.len() != model.query_dim {
                return Err(Error::dim(format!(
                    "RoI {i} query has {} values, expected {}",
                    q.len(),
                    model.query_dim
                )));
            }
        }
        if cfg.mode == Mode::Oracle && r.reference.is_none() {
            return Err(Error::Missing(format!(
                "oracle mode needs a reference mask for RoI {i}"
            )));
        }
    }
    Ok(())
}

fn query_features(roi: &RoiInput, index: usize, dim: usize, seed: u64) -> Vec<f32> {
    match &roi.query {
        Some(q) => q.clone(),
        None => (0..dim)
            .map(|c| unit(hash4(seed, 0x51, index as u64, c as u64)))
            .collect(),
    }
}

/// Evaluates an MLP on `n` rows of size `f`, in parallel over rows.
fn mlp_rows(rows: &[f32], f: usize, mlp: &Mlp) -> Vec<f32> {
    let od = mlp.out_dim();
    let mut out = vec![0.0; rows.len() / f * od];
    out.par_chunks_mut(od)
        .zip(rows.par_chunks(f))
        .for_each(|(dst, src)| mlp.apply(src, dst));
    out
}

/// Segmentation logits and refinement scores of the given rows, from the
/// heads or, in oracle mode, from the reference targets.
fn heads(
    rows: &[f32],
    f: usize,
    cells: &[CellCoord],
    seg: &Mlp,
    refine: &Mlp,
    targets: Option<&CellTargets>,
) -> (Vec<f32>, Vec<f32>) {
    let logits = mlp_rows(rows, f, seg);
    let scores = mlp_rows(rows, f, refine);
    match targets {
        Some(t) => cells
            .iter()
            .map(|c| {
                let i = c.y * t.width + c.x;
                let l = if t.seg[i] { ORACLE_LOGIT } else { -ORACLE_LOGIT };
                (l, if t.refine[i] { 1.0 } else { 0.0 })
            })
            .unzip(),
        None => (logits, scores.into_iter().map(sigmoid).collect()),
    }
}

fn targets_for(roi: &RoiInput, cfg: &RunConfig, side: usize) -> Result<Option<CellTargets>> {
    match cfg.mode {
        Mode::Oracle => {
            let r = roi.reference.as_ref().expect("checked by check_inputs");
            Ok(Some(make_targets(r, side, side)?))
        }
        Mode::Weights => Ok(None),
    }
}

fn all_cells(side: usize, stage: u8) -> Vec<CellCoord> {
    (0..side * side)
        .map(|i| CellCoord::at_stage(stage, i / side, i % side))
        .collect()
}

fn record_heads(ledger: &mut CostLedger, s: u8, rows: u64, total: u64, seg: &Mlp, refine: &Mlp) {
    ledger.record("seg_head", s, rows * seg.macs_per_row(), rows, total);
    ledger.record("refine_head", s, rows * refine.macs_per_row(), rows, total);
}

/// Stage 0: RoIAlign, query fusion, four conv + ReLU layers and the heads,
/// densely over the 14x14 grid.
fn stage0(
    roi: &RoiInput,
    index: usize,
    sampler: &dyn FeatureSampler,
    model: &Model,
    cfg: &RunConfig,
) -> Result<RoiState> {
    let w = &model.stage0;
    let side = BASE_GRID;
    let cells = (side * side) as u64;
    let mut ledger = CostLedger::new();

    let level = assign_level(&roi.bbox)?;
    let (mut x, macs) = roi_align(sampler, level, &roi.bbox, side)?;
    ledger.record("roi_align", 0, macs, cells, cells);

    let q = query_features(roi, index, model.query_dim, cfg.seed);
    let ext: Vec<f32> = (0..side * side).flat_map(|_| q.iter().copied()).collect();
    x = fuse_external_dense(&x, &ext, &w.query_fuse)?;
    ledger.record("query_fuse", 0, cells * w.query_fuse.macs_per_row(), cells, cells);

    let mut conv_macs = 0;
    for k in &w.convs {
        x = conv2d_dense(&x, k)?;
        let relu: Vec<f32> = x.as_slice().iter().map(|v| v.max(0.0)).collect();
        x = DenseTensor::new(x.features(), side, side, relu)?;
        conv_macs += macs_conv(cells, 3, k.in_dim as u64, k.out_dim as u64, 1);
    }
    ledger.record("conv", 0, conv_macs, cells, cells);

    let grid = all_cells(side, 0);
    let targets = targets_for(roi, cfg, side)?;
    let (logits, scores) = heads(&x.to_cell_major(), cfg.f0, &grid, &w.seg, &w.refine, targets.as_ref());
    record_heads(&mut ledger, 0, cells, cells, &w.seg, &w.refine);

    let mask: Vec<f32> = logits.iter().map(|&l| sigmoid(l)).collect();
    Ok(RoiState {
        features: Features::Dense(x),
        candidates: CandidateScores { cells: grid, scores },
        states: vec![RefinementState {
            stage: 0,
            height: side,
            width: side,
            features: cfg.f0,
            active_cells: side * side,
            passive_rows: 0,
            mask,
        }],
        ledger,
    })
}

/// Neck features at the centers of the given cells, `C` values per cell.
fn neck_features(sampler: &dyn FeatureSampler, level: u32, b: &BBox, side: usize, cells: &[CellCoord]) -> Vec<f32> {
    let c = sampler.channels();
    let mut out = vec![0.0; cells.len() * c];
    out.par_chunks_mut(c).zip(cells.par_iter()).for_each(|(dst, cell)| {
        let (x, y) = cell_center(b, side, cell.y, cell.x);
        sampler.sample(level, x, y, dst);
    });
    out
}

/// One sparse refinement stage for one RoI, refining `selected` cells of
/// the previous grid.
fn sparse_stage(
    st: &mut RoiState,
    roi: &RoiInput,
    selected: &[CellCoord],
    sampler: &dyn FeatureSampler,
    w: &StageWeights,
    sc: StageConfig,
    cfg: &RunConfig,
) -> Result<()> {
    let s = sc.stage;
    let side = sc.width;
    let total = (side * side) as u64;
    let parents = match &st.features {
        Features::Dense(d) => SpsTensor::from_dense(d, selected)?,
        Features::Sparse(t) => t.reselect(selected)?,
    };
    let f = parents.features();
    let t = parents.subdivide(&w.children)?;
    let cells: Vec<CellCoord> = t
        .active_cells()
        .into_iter()
        .map(|c| CellCoord::at_stage(s, c.y, c.x))
        .collect();
    let na = cells.len() as u64;
    let ledger = &mut st.ledger;
    let child_macs: u64 = w.children.iter().map(|m| m.macs_per_row()).sum();
    ledger.record("subdivide", s, parents.num_active() as u64 * child_macs, na, total);

    let level = stage_level(assign_level(&roi.bbox)?, s);
    let ext = neck_features(sampler, level, &roi.bbox, side, &cells);
    ledger.record(
        "neck_sample",
        s,
        macs_bilinear(na, sampler.channels() as u64),
        na,
        total,
    );
    let t = fuse_external(&t, &ext, &w.neck_fuse)?;
    ledger.record("neck_fuse", s, na * w.neck_fuse.macs_per_row(), na, total);

    let rows = (t.num_active() + t.num_passive()) as u64;
    let t = halve_features(&t, &w.halve)?;
    ledger.record("halve", s, macs_linear(rows, f as u64, (f / 2) as u64), na, total);

    let t = sfm(&t, &w.sfm[0], &w.sfm[1], &w.sfm[2])?;
    let h = (f / 2) as u64;
    ledger.record("sfm", s, 3 * macs_conv(na, 3, h, h, 1), na, total);

    let targets = targets_for(roi, cfg, side)?;
    let (logits, scores) = heads(t.active(), f / 2, &cells, &w.seg, &w.refine, targets.as_ref());
    record_heads(ledger, s, na, total, &w.seg, &w.refine);

    let prev = st.states.last().expect("stage 0 ran");
    let mask = assemble_mask(&prev.mask, prev.height, prev.width, &cells, &logits)?;
    st.states.push(RefinementState {
        stage: s,
        height: side,
        width: side,
        features: f / 2,
        active_cells: cells.len(),
        passive_rows: t.num_passive(),
        mask,
    });
    st.candidates = CandidateScores { cells, scores };
    st.features = Features::Sparse(t);
    Ok(())
}

/// Cells eligible for refinement: all predicted cells when forced dense,
/// otherwise those whose refinement score beats the threshold.
fn eligible(c: &CandidateScores, cfg: &RunConfig) -> CandidateScores {
    if cfg.force_dense_active {
        return c.clone();
    }
    let (cells, scores) = c
        .cells
        .iter()
        .zip(&c.scores)
        .filter(|(_, &s)| s > cfg.min_refine_score)
        .map(|(c, &s)| (*c, s))
        .unzip();
    CandidateScores { cells, scores }
}

fn finish(states: Vec<RoiState>, rois: &[RoiInput]) -> Result<RunOutput> {
    let mut ledger = CostLedger::new();
    let mut out = Vec::with_capacity(states.len());
    for (st, roi) in states.into_iter().zip(rois) {
        ledger.merge(&st.ledger);
        let probs = st.states.last().expect("stage 0 ran").mask.clone();
        let score = seg_score(&ScoreInputs {
            s_cls: roi.score,
            probs,
        })?;
        out.push(RoiResult {
            states: st.states,
            score,
        });
    }
    Ok(RunOutput {
        rois: out,
        ledger: ledger.canonical(),
    })
}

/// Runs the coarse-to-fine head on the RoIs of one image. Each stage after
/// the first refines at most `top_n` cells across all RoIs, chosen by
/// refinement score among the cells predicted at the previous stage.
pub fn run_refinement(
    rois: &[RoiInput],
    sampler: &dyn FeatureSampler,
    model: &Model,
    cfg: &RunConfig,
) -> Result<RunOutput> {
    check_inputs(rois, sampler, model, cfg)?;
    let mut states: Vec<RoiState> = rois
        .par_iter()
        .enumerate()
        .map(|(i, r)| stage0(r, i, sampler, model, cfg))
        .collect::<Result<_>>()?;
    for s in 1..=cfg.stages {
        let sc = cfg.stage(s);
        let cands: Vec<CandidateScores> = states.iter().map(|st| eligible(&st.candidates, cfg)).collect();
        let selected = if cfg.force_dense_active {
            cands.iter().map(|c| c.cells.clone()).collect()
        } else {
            select_active(&cands, cfg.top_n)
        };
        let w = &model.stages[s as usize - 1];
        states
            .par_iter_mut()
            .zip(rois.par_iter())
            .zip(selected.par_iter())
            .try_for_each(|((st, roi), sel)| sparse_stage(st, roi, sel, sampler, w, sc, cfg))?;
    }
    finish(states, rois)
}

/// The dense baseline: every stage subdivides, fuses and processes every
/// cell of its grid.
pub fn run_dense(rois: &[RoiInput], sampler: &dyn FeatureSampler, model: &Model, cfg: &RunConfig) -> Result<RunOutput> {
    check_inputs(rois, sampler, model, cfg)?;
    let states: Vec<RoiState> = rois
        .par_iter()
        .enumerate()
        .map(|(i, roi)| {
            let mut st = stage0(roi, i, sampler, model, cfg)?;
            for s in 1..=cfg.stages {
                dense_stage(&mut st, roi, sampler, &model.stages[s as usize - 1], cfg.stage(s), cfg)?;
            }
            Ok(st)
        })
        .collect::<Result<_>>()?;
    finish(states, rois)
}

fn dense_stage(
    st: &mut RoiState,
    roi: &RoiInput,
    sampler: &dyn FeatureSampler,
    w: &StageWeights,
    sc: StageConfig,
    cfg: &RunConfig,
) -> Result<()> {
    let Features::Dense(prev) = &st.features else {
        unreachable!("the dense pipeline never builds sparse tensors");
    };
    let s = sc.stage;
    let side = sc.width;
    let n = (side * side) as u64;
    let parents = (prev.height() * prev.width()) as u64;
    let f = prev.features();
    let ledger = &mut st.ledger;

    let x = subdivide_dense(prev, &w.children)?;
    let child_macs: u64 = w.children.iter().map(|m| m.macs_per_row()).sum();
    ledger.record("subdivide", s, parents * child_macs, n, n);

    let cells = all_cells(side, s);
    let level = stage_level(assign_level(&roi.bbox)?, s);
    let ext = neck_features(sampler, level, &roi.bbox, side, &cells);
    ledger.record("neck_sample", s, macs_bilinear(n, sampler.channels() as u64), n, n);
    let x = fuse_external_dense(&x, &ext, &w.neck_fuse)?;
    ledger.record("neck_fuse", s, n * w.neck_fuse.macs_per_row(), n, n);

    let x = halve_dense(&x, &w.halve)?;
    ledger.record("halve", s, macs_linear(n, f as u64, (f / 2) as u64), n, n);

    let x = sfm_dense(&x, &w.sfm[0], &w.sfm[1], &w.sfm[2])?;
    let h = (f / 2) as u64;
    ledger.record("sfm", s, 3 * macs_conv(n, 3, h, h, 1), n, n);

    let targets = targets_for(roi, cfg, side)?;
    let (logits, scores) = heads(&x.to_cell_major(), f / 2, &cells, &w.seg, &w.refine, targets.as_ref());
    record_heads(ledger, s, n, n, &w.seg, &w.refine);

    let last = st.states.last().expect("stage 0 ran");
    let mask = assemble_mask(&last.mask, last.height, last.width, &cells, &logits)?;
    st.states.push(RefinementState {
        stage: s,
        height: side,
        width: side,
        features: f / 2,
        active_cells: side * side,
        passive_rows: 0,
        mask,
    });
    st.candidates = CandidateScores { cells, scores };
    st.features = Features::Dense(x);
    Ok(())
}

/// MAC ledger of [`run_dense`] on `num_rois` RoIs, computed from shapes alone.
pub fn dense_ledger(model: &Model, cfg: &RunConfig, num_rois: usize) -> CostLedger {
    let mut ledger = CostLedger::new();
    let c = model.channels as u64;
    for _ in 0..num_rois {
        let n = (BASE_GRID * BASE_GRID) as u64;
        let w = &model.stage0;
        ledger.record("roi_align", 0, macs_bilinear(n, c), n, n);
        ledger.record("query_fuse", 0, n * w.query_fuse.macs_per_row(), n, n);
        let conv_macs = w
            .convs
            .iter()
            .map(|k| macs_conv(n, 3, k.in_dim as u64, k.out_dim as u64, 1))
            .sum();
        ledger.record("conv", 0, conv_macs, n, n);
        record_heads(&mut ledger, 0, n, n, &w.seg, &w.refine);
        for s in 1..=cfg.stages {
            let w = &model.stages[s as usize - 1];
            let parents = ((BASE_GRID << (s - 1)) * (BASE_GRID << (s - 1))) as u64;
            let n = 4 * parents;
            let f = (cfg.f0 >> (s - 1)) as u64;
            let child_macs: u64 = w.children.iter().map(|m| m.macs_per_row()).sum();
            ledger.record("subdivide", s, parents * child_macs, n, n);
            ledger.record("neck_sample", s, macs_bilinear(n, c), n, n);
            ledger.record("neck_fuse", s, n * w.neck_fuse.macs_per_row(), n, n);
            ledger.record("halve", s, macs_linear(n, f, f / 2), n, n);
            ledger.record("sfm", s, 3 * macs_conv(n, 3, f / 2, f / 2, 1), n, n);
            record_heads(&mut ledger, s, n, n, &w.seg, &w.refine);
        }
    }
    ledger.canonical()
}
