//! Multiply-accumulate accounting.
//!
//! One multiply followed by an add counts as one MAC. Bias additions,
//! comparisons, sorting and index arithmetic are free. Bilinear sampling
//! costs 4 MACs per sampled point per channel.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn macs_conv(cells: u64, kernel: u64, f_in: u64, f_out: u64, _dilation: u64) -> u64 {
    cells * kernel * kernel * f_in * f_out
}

pub fn macs_linear(rows: u64, f_in: u64, f_out: u64) -> u64 {
    rows * f_in * f_out
}

pub fn macs_bilinear(samples: u64, channels: u64) -> u64 {
    4 * samples * channels
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub op: String,
    pub stage: u8,
    pub macs: u64,
    pub active_cells: u64,
    pub total_cells: u64,
}

/// MAC counts per `(stage, op)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    entries: Vec<LedgerEntry>,
}

/// Per-stage totals of a ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTotals {
    pub stage: u8,
    pub macs: u64,
    pub active_cells: u64,
    pub total_cells: u64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds MACs to the `(stage, op)` entry. Cell counts of repeated records
    /// for the same key accumulate, which is how per-RoI ledgers combine.
    pub fn record(&mut self, op: &str, stage: u8, macs: u64, active_cells: u64, total_cells: u64) {
        debug_assert!(active_cells <= total_cells);
        match self.entries.iter_mut().find(|e| e.stage == stage && e.op == op) {
            Some(e) => {
                e.macs += macs;
                e.active_cells += active_cells;
                e.total_cells += total_cells;
            }
            None => self.entries.push(LedgerEntry {
                op: op.to_string(),
                stage,
                macs,
                active_cells,
                total_cells,
            }),
        }
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total_macs(&self) -> u64 {
        self.entries.iter().map(|e| e.macs).sum()
    }

    /// Folds `other` into `self`; commutative and associative up to entry order.
    pub fn merge(&mut self, other: &CostLedger) {
        for e in &other.entries {
            self.record(&e.op, e.stage, e.macs, e.active_cells, e.total_cells);
        }
    }

    /// Entries sorted by `(stage, op)`.
    pub fn canonical(&self) -> CostLedger {
        let mut entries = self.entries.clone();
        entries.sort_by(|a, b| (a.stage, &a.op).cmp(&(b.stage, &b.op)));
        CostLedger { entries }
    }

    /// Stage totals. Cell counts are the largest reported by any op of the
    /// stage (all ops of a stage run over the same cells).
    pub fn stages(&self) -> Vec<StageTotals> {
        let mut by_stage: BTreeMap<u8, StageTotals> = BTreeMap::new();
        for e in &self.entries {
            let t = by_stage.entry(e.stage).or_insert(StageTotals {
                stage: e.stage,
                macs: 0,
                active_cells: 0,
                total_cells: 0,
            });
            t.macs += e.macs;
            t.active_cells = t.active_cells.max(e.active_cells);
            t.total_cells = t.total_cells.max(e.total_cells);
        }
        by_stage.into_values().collect()
    }
}

/// One row of the ledger report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageComparison {
    pub stage: u8,
    pub dense_macs: u64,
    pub sparse_macs: u64,
    pub active_cells: u64,
    pub total_cells: u64,
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    pub dense_macs: u64,
    pub sparse_macs: u64,
    pub reduction_fraction: f64,
    pub stages: Vec<StageComparison>,
}

/// `1 - sparse / dense`, overall and per stage. Both ledgers must cover the
/// same stages with the same grid sizes.
pub fn compare(dense: &CostLedger, sparse: &CostLedger) -> Result<CostComparison> {
    let d = dense.stages();
    let s = sparse.stages();
    if d.len() != s.len() {
        return Err(Error::dim(format!(
            "dense ledger has {} stages, sparse ledger {}",
            d.len(),
            s.len()
        )));
    }
    let mut stages = Vec::with_capacity(d.len());
    for (a, b) in d.iter().zip(&s) {
        if a.stage != b.stage || a.total_cells != b.total_cells {
            return Err(Error::dim(format!(
                "stage {} covers {} cells densely but stage {} covers {} sparsely",
                a.stage, a.total_cells, b.stage, b.total_cells
            )));
        }
        stages.push(StageComparison {
            stage: a.stage,
            dense_macs: a.macs,
            sparse_macs: b.macs,
            active_cells: b.active_cells,
            total_cells: b.total_cells,
            reduction: reduction(a.macs, b.macs),
        });
    }
    let (dm, sm) = (dense.total_macs(), sparse.total_macs());
    Ok(CostComparison {
        dense_macs: dm,
        sparse_macs: sm,
        reduction_fraction: reduction(dm, sm),
        stages,
    })
}

fn reduction(dense: u64, sparse: u64) -> f64 {
    if dense == 0 {
        0.0
    } else {
        1.0 - sparse as f64 / dense as f64
    }
}
