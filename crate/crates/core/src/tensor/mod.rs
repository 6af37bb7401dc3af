//! Dense and structure-preserving sparse (SPS) feature grids.
//!
//! A [`DenseTensor`] is a per-RoI `[F, H, W]` feature map. An [`SpsTensor`]
//! stores the same grid as an `N_A x F` matrix of active features, an
//! `N_P x F` matrix of passive features and an `H x W` index map pointing
//! every cell at its feature row. Active rows are the ones recomputed by
//! sparse operators; passive rows may be shared by several cells.

mod dense;
mod io;
mod sps;

pub use dense::DenseTensor;
pub use io::{SpsJson, SPS_JSON_FORMAT, SPS_MAGIC};
pub use sps::SpsTensor;

/// A cell of a stage grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellCoord {
    pub stage: u8,
    pub y: usize,
    pub x: usize,
}

impl CellCoord {
    pub fn new(y: usize, x: usize) -> Self {
        CellCoord { stage: 0, y, x }
    }

    pub fn at_stage(stage: u8, y: usize, x: usize) -> Self {
        CellCoord { stage, y, x }
    }

    /// Row-major linear index in a grid of the given width.
    pub fn linear(&self, width: usize) -> usize {
        self.y * width + self.x
    }
}

/// What a neighbor lookup returns when it falls outside the grid. Only the
/// zero vector is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PaddingPolicy {
    #[default]
    ZeroVector,
}

/// A map from `F_in`-dimensional feature vectors to `F_out`-dimensional ones.
///
/// Implemented by the linear layers and MLPs in [`crate::ops`]; used by
/// [`SpsTensor::subdivide`] to derive child features from their parent.
pub trait FeatureTransform: Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    /// Writes `out_dim()` values into `out`.
    fn apply(&self, input: &[f32], out: &mut [f32]);
    /// Multiply-accumulates spent on a single input vector.
    fn macs_per_row(&self) -> u64;
}

/// The identity map on `F`-dimensional features.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl FeatureTransform for Identity {
    fn in_dim(&self) -> usize {
        self.0
    }

    fn out_dim(&self) -> usize {
        self.0
    }

    fn apply(&self, input: &[f32], out: &mut [f32]) {
        out.copy_from_slice(input);
    }

    fn macs_per_row(&self) -> u64 {
        0
    }
}
