use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side of the stage-0 grid.
pub const BASE_GRID: usize = 14;
/// Default stage-0 feature size.
pub const DEFAULT_F0: usize = 256;
/// Default number of cells refined per image and stage.
pub const DEFAULT_TOP_N: usize = 10_000;
pub const MAX_STAGES: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Heads replaced by values sampled from a reference mask.
    Oracle,
    /// Heads evaluated with (possibly synthesized) weights.
    Weights,
}

/// Shape of one refinement stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: u8,
    pub height: usize,
    pub width: usize,
    /// Feature size after the stage (`F_0 / 2^s`).
    pub features: usize,
    pub top_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub stages: u8,
    pub top_n: usize,
    pub seed: u64,
    pub mode: Mode,
    pub f0: usize,
    /// Cells are refinement candidates only when their refinement score is
    /// strictly above this value.
    pub min_refine_score: f32,
    /// Refine every cell at every stage, ignoring scores and `top_n`.
    pub force_dense_active: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            stages: MAX_STAGES,
            top_n: DEFAULT_TOP_N,
            seed: 0,
            mode: Mode::Oracle,
            f0: DEFAULT_F0,
            min_refine_score: 0.0,
            force_dense_active: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_STAGES).contains(&self.stages) {
            return Err(Error::contract(format!(
                "stage count must be in 1..={MAX_STAGES}, got {}",
                self.stages
            )));
        }
        if self.f0 == 0 || !self.f0.is_multiple_of(1 << self.stages) {
            return Err(Error::contract(format!(
                "F_0 = {} must be a positive multiple of 2^{}",
                self.f0, self.stages
            )));
        }
        if !self.min_refine_score.is_finite() {
            return Err(Error::contract("refinement score threshold must be finite"));
        }
        Ok(())
    }

    pub fn stage(&self, s: u8) -> StageConfig {
        let side = BASE_GRID << s;
        StageConfig {
            stage: s,
            height: side,
            width: side,
            features: self.f0 >> s,
            top_n: self.top_n,
        }
    }

    /// Stages 0 through `stages`.
    pub fn stage_configs(&self) -> Vec<StageConfig> {
        (0..=self.stages).map(|s| self.stage(s)).collect()
    }

    /// Side of the final mask grid.
    pub fn output_side(&self) -> usize {
        BASE_GRID << self.stages
    }
}
