//! Command-line front end: file formats, the synthetic shape corpus and the
//! sparse-versus-dense benchmark.

mod bench;
pub mod cli;
mod io;
mod synthetic;

pub use bench::{run_bench, sample_seed, BenchConfig, BenchReport, BoundarySummary, SampleReport};
pub use io::{
    read_json, to_json_bytes, write_atomic, ImageRois, MaskFile, MaskRecord, RefMaskFile, RefMaskRecord, RoisFile,
    BENCH_FORMAT, LEDGER_FORMAT, MASKS_FORMAT, ROIS_FORMAT,
};
pub use synthetic::{gen_synthetic, Shape, ShapeKind, SyntheticSample, SyntheticShapeSpec};
