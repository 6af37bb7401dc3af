//! The coarse-to-fine mask head: a dense 14x14 stage followed by up to three
//! sparse stages that each double the resolution and recompute only the
//! cells selected by their refinement scores.

mod assemble;
mod config;
mod level;
mod model;
mod panoptic;
mod paste;
mod run;
pub(crate) mod sampler;
mod score;
mod select;
mod targets;

pub use assemble::{assemble_mask, sigmoid, upsample_nearest};
pub use config::{Mode, RunConfig, StageConfig, BASE_GRID, DEFAULT_F0, DEFAULT_TOP_N, MAX_STAGES};
pub use level::{assign_level, stage_level, MAX_LEVEL, MIN_LEVEL};
pub use model::{Model, Stage0Weights, StageWeights, STAGE0_CONVS};
pub use panoptic::{panoptic_postprocess, PanopticDetection, PanopticParams};
pub use paste::paste_mask;
pub use run::{dense_ledger, run_dense, run_refinement, RefinementState, RoiInput, RoiResult, RunOutput, ORACLE_LOGIT};
pub use sampler::{roi_align, FeatureSampler, PyramidSampler, SyntheticSampler};
pub use score::{seg_score, ScoreInputs, MASK_THRESHOLD};
pub use select::{select_active, CandidateScores};
pub use targets::{make_targets, CellTargets};

/// A RoI box; boxes share the detection geometry type.
pub type RoiBox = crate::geometry::BBox;
