use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bench::{run_bench, BenchConfig};
use super::io::{
    check_format, read_json, to_json_bytes, write_atomic, ImageRois, MaskFile, MaskRecord, RefMaskFile, RoisFile,
    LEDGER_FORMAT, MASKS_FORMAT, ROIS_FORMAT,
};
use super::synthetic::ShapeKind;
use crate::cost::{compare, CostComparison, CostLedger, LedgerEntry};
use crate::error::{Error, Result};
use crate::metrics::{
    ap_suite, ap_suite_with, boundary_iou, pq, ApReport, BinaryMask, Categories, EvalEntry, Geometry, PanopticImage,
    PqReport, BOUNDARY_DILATION,
};
use crate::ops::{ParamSource, WeightBundle};
use crate::pipeline::sampler::splitmix;
use crate::pipeline::{
    dense_ledger, paste_mask, run_refinement, FeatureSampler, Mode, Model, PyramidSampler, RunConfig, SyntheticSampler,
    DEFAULT_F0, DEFAULT_TOP_N, MASK_THRESHOLD, MAX_STAGES,
};
use crate::tensor::{DenseTensor, SpsJson, SpsTensor, SPS_JSON_FORMAT, SPS_MAGIC};

pub const EVAL_FORMAT: &str = "sps-eval/1";
pub const PANOPTIC_FORMAT: &str = "sps-panoptic/1";
pub const PYRAMID_FORMAT: &str = "sps-pyramid/1";

/// Exit code for malformed input.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for contract violations.
pub const EXIT_CONTRACT: i32 = 3;

const SCHEMAS: &str = "\
File schemas (JSON unless noted):
  RoIs        {\"format\":\"sps-rois/1\",\"images\":[{\"image_id\",\"width\",\"height\",
               \"rois\":[{\"box\":[x0,y0,x1,y1],\"class\",\"score\",\"query\"?:[f32]}]}]}
  ref masks   {\"format\":\"sps-rle/1\",\"masks\":[{\"image_id\",\"roi\",\"mask\":RLE}]}
              mask in the RoI frame, at least as large as the final grid
  RLE         {\"width\",\"height\",\"counts\":[u32]}, column-major, background first
  features    {\"format\":\"sps-pyramid/1\",\"images\":[{\"image_id\",
               \"levels\":{\"<k>\":{\"features\",\"height\",\"width\",\"data\":[f32]}}}]}
              data channel-major; level k has stride 2^k
  eval        {\"format\":\"sps-eval/1\",\"entries\":[{\"image_id\",\"class\",\"score\"?,
               \"geometry\":{\"box\":[x0,y0,x1,y1]} | {\"mask\":RLE}}]}
  panoptic    {\"format\":\"sps-panoptic/1\",\"images\":[{\"image_id\",
               \"segments\":[{\"class\",\"is_thing\",\"rle\":RLE}]}]}
  weights     binary: per array u16 name length, name, u8 rank, u32 dims, f32 data (LE)
  SPS tensor  binary \"SPS1\" + u32 F,H,W,N_A,N_P + active, passive, index map (LE),
              or JSON {\"format\":\"sps-tensor/1\",...}

Environment variables (prefix SPSR_) supply defaults for the matching flags.
Exit codes: 0 success, 2 malformed input, 3 contract violation.";

#[derive(Debug, Parser)]
#[command(name = "sparseseg", version, about = "Sparse mask refinement and segmentation metrics", after_help = SCHEMAS)]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "SPSR_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Refine RoI masks coarse-to-fine and write masks.json and ledger.json.
    Refine(RefineArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Benchmark sparse against dense refinement on synthetic shapes.
    Bench(BenchArgs),
    /// Convert SPS tensors between the binary and JSON forms.
    Convert(ConvertArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliMode {
    Oracle,
    Weights,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long, value_enum, env = "SPSR_MODE", default_value = "oracle")]
    pub mode: CliMode,
    #[arg(long)]
    pub rois: PathBuf,
    /// Reference masks, required in oracle mode.
    #[arg(long)]
    pub ref_masks: Option<PathBuf>,
    /// Weight bundle; missing arrays are drawn from the seed.
    #[arg(long, env = "SPSR_WEIGHTS")]
    pub weights: Option<PathBuf>,
    /// Neck feature pyramids; procedural features are used when absent.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "SPSR_STAGES", default_value_t = MAX_STAGES)]
    pub stages: u8,
    #[arg(long, env = "SPSR_TOP_N", default_value_t = DEFAULT_TOP_N)]
    pub top_n: usize,
    #[arg(long, env = "SPSR_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "SPSR_F0", default_value_t = DEFAULT_F0)]
    pub f0: usize,
    /// Query feature size; defaults to F_0.
    #[arg(long, env = "SPSR_QUERY_DIM")]
    pub query_dim: Option<usize>,
    #[arg(long)]
    pub force_dense_active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Det,
    Seg,
    Boundary,
    Panoptic,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub gts: PathBuf,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, env = "SPSR_COUNT", default_value_t = 50)]
    pub count: usize,
    #[arg(long, value_enum, env = "SPSR_SHAPE", default_value = "blob")]
    pub shape: ShapeKind,
    #[arg(long, env = "SPSR_CANVAS", default_value_t = 448)]
    pub canvas: usize,
    #[arg(long, env = "SPSR_F0", default_value_t = 64)]
    pub f0: usize,
    #[arg(long, env = "SPSR_STAGES", default_value_t = MAX_STAGES)]
    pub stages: u8,
    #[arg(long, env = "SPSR_TOP_N", default_value_t = DEFAULT_TOP_N)]
    pub top_n: usize,
    #[arg(long, env = "SPSR_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub force_dense_active: bool,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Binary or JSON tensor; the form is detected from the content.
    #[arg(long)]
    pub input: PathBuf,
    /// Written in the other form.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct EvalFile {
    format: String,
    entries: Vec<EvalEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PanopticFile {
    format: String,
    images: Vec<PanopticImage>,
}

#[derive(Debug, Deserialize)]
struct LevelJson {
    features: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

#[derive(Debug, Deserialize)]
struct ImagePyramid {
    image_id: u64,
    levels: BTreeMap<u32, LevelJson>,
}

#[derive(Debug, Deserialize)]
struct PyramidFile {
    format: String,
    images: Vec<ImagePyramid>,
}

#[derive(Debug, Serialize)]
struct LedgerReport<'a> {
    format: &'static str,
    comparison: CostComparison,
    sparse_entries: &'a [LedgerEntry],
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum EvalReport {
    Ap(ApReport),
    Pq(PqReport),
}

/// Parses arguments and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_CONTRACT
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::format("--threads must be positive"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::contract(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Refine(a) => cmd_refine(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Convert(a) => cmd_convert(&a),
    })
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn load_pyramids(path: &Path) -> Result<HashMap<u64, PyramidSampler>> {
    let file: PyramidFile = read_json(path)?;
    check_format(&file.format, PYRAMID_FORMAT)?;
    let mut out = HashMap::new();
    for img in file.images {
        let mut levels = BTreeMap::new();
        for (k, l) in img.levels {
            let t = DenseTensor::new(l.features, l.height, l.width, l.data)
                .map_err(|e| Error::format(format!("image {} level {k}: {e}", img.image_id)))?;
            levels.insert(k, t);
        }
        if out.insert(img.image_id, PyramidSampler::new(levels)?).is_some() {
            return Err(Error::format(format!("duplicate features for image {}", img.image_id)));
        }
    }
    Ok(out)
}

fn load_references(path: &Path) -> Result<HashMap<(u64, usize), BinaryMask>> {
    let file: RefMaskFile = read_json(path)?;
    check_format(&file.format, MASKS_FORMAT)?;
    let mut out = HashMap::new();
    for r in file.masks {
        if out.insert((r.image_id, r.roi), r.mask).is_some() {
            return Err(Error::format(format!(
                "duplicate reference mask for image {} RoI {}",
                r.image_id, r.roi
            )));
        }
    }
    Ok(out)
}

fn cmd_refine(a: &RefineArgs) -> Result<()> {
    let mut rois: RoisFile = read_json(&a.rois)?;
    check_format(&rois.format, ROIS_FORMAT)?;
    let mode = match a.mode {
        CliMode::Oracle => Mode::Oracle,
        CliMode::Weights => Mode::Weights,
    };
    let cfg = RunConfig {
        stages: a.stages,
        top_n: a.top_n,
        seed: a.seed,
        mode,
        f0: a.f0,
        force_dense_active: a.force_dense_active,
        ..RunConfig::default()
    };
    cfg.validate()?;

    if mode == Mode::Oracle {
        let path = a
            .ref_masks
            .as_ref()
            .ok_or_else(|| Error::Missing("oracle mode needs --ref-masks".into()))?;
        let mut refs = load_references(path)?;
        for img in &mut rois.images {
            for (i, r) in img.rois.iter_mut().enumerate() {
                r.reference =
                    Some(refs.remove(&(img.image_id, i)).ok_or_else(|| {
                        Error::Missing(format!("no reference mask for image {} RoI {i}", img.image_id))
                    })?);
            }
        }
    }
    let bundle = match &a.weights {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| Error::Missing(format!("cannot read {}: {e}", p.display())))?;
            Some(WeightBundle::read_from(std::io::BufReader::new(f))?)
        }
        None => None,
    };
    let params = ParamSource::new(bundle.as_ref(), a.seed);
    let model = Model::load(&params, &cfg, a.f0, a.query_dim.unwrap_or(a.f0))?;
    let pyramids = match &a.features {
        Some(p) => Some(load_pyramids(p)?),
        None => None,
    };

    let results: Vec<(Vec<MaskRecord>, CostLedger)> = rois
        .images
        .par_iter()
        .map(|img| refine_image(img, &model, &cfg, pyramids.as_ref()))
        .collect::<Result<_>>()?;

    let mut masks = Vec::new();
    let mut sparse = CostLedger::new();
    for (m, l) in results {
        masks.extend(m);
        sparse.merge(&l);
    }
    let sparse = sparse.canonical();
    let total_rois: usize = rois.images.iter().map(|i| i.rois.len()).sum();
    let dense = dense_ledger(&model, &cfg, total_rois);
    let ledger = LedgerReport {
        format: LEDGER_FORMAT,
        comparison: compare(&dense, &sparse)?,
        sparse_entries: sparse.entries(),
    };
    let masks = MaskFile {
        format: MASKS_FORMAT.to_string(),
        masks,
    };
    // serialize both before writing either
    let masks_bytes = to_json_bytes(&masks)?;
    let ledger_bytes = to_json_bytes(&ledger)?;
    write_atomic(&a.out.join("masks.json"), &masks_bytes)?;
    write_atomic(&a.out.join("ledger.json"), &ledger_bytes)?;
    Ok(())
}

fn refine_image(
    img: &ImageRois,
    model: &Model,
    cfg: &RunConfig,
    pyramids: Option<&HashMap<u64, PyramidSampler>>,
) -> Result<(Vec<MaskRecord>, CostLedger)> {
    if img.width == 0 || img.height == 0 {
        return Err(Error::format(format!("image {} has an empty canvas", img.image_id)));
    }
    let synthetic = SyntheticSampler {
        seed: cfg.seed ^ splitmix(img.image_id),
        channels: cfg.f0,
    };
    let sampler: &dyn FeatureSampler = match pyramids {
        Some(p) => p
            .get(&img.image_id)
            .ok_or_else(|| Error::Missing(format!("no features for image {}", img.image_id)))?,
        None => &synthetic,
    };
    let out = run_refinement(&img.rois, sampler, model, cfg)?;
    let records = img
        .rois
        .iter()
        .zip(&out.rois)
        .enumerate()
        .map(|(i, (roi, r))| {
            let side = r.side();
            let fg: Vec<bool> = r.final_mask().iter().map(|&p| p >= MASK_THRESHOLD).collect();
            Ok(MaskRecord {
                image_id: img.image_id,
                roi: i,
                class_id: roi.class_id,
                score: r.score,
                side,
                roi_mask: BinaryMask::from_bitmap(side, side, &fg)?,
                image_mask: paste_mask(r.final_mask(), side, &roi.bbox, img.width, img.height),
            })
        })
        .collect::<Result<_>>()?;
    Ok((records, out.ledger))
}

fn load_entries(path: &Path, want_mask: bool) -> Result<Vec<EvalEntry>> {
    let f: EvalFile = read_json(path)?;
    check_format(&f.format, EVAL_FORMAT)?;
    for e in &f.entries {
        let is_mask = matches!(e.geometry, Geometry::Mask(_));
        if is_mask != want_mask {
            return Err(Error::format(format!(
                "{}: task expects {} geometry",
                path.display(),
                if want_mask { "mask" } else { "box" }
            )));
        }
    }
    Ok(f.entries)
}

fn load_panoptic(path: &Path) -> Result<Vec<PanopticImage>> {
    let f: PanopticFile = read_json(path)?;
    check_format(&f.format, PANOPTIC_FORMAT)?;
    Ok(f.images)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let report = match a.task {
        Task::Det | Task::Seg => {
            let want_mask = a.task == Task::Seg;
            let preds = load_entries(&a.preds, want_mask)?;
            let gts = load_entries(&a.gts, want_mask)?;
            EvalReport::Ap(ap_suite(&preds, &gts)?)
        }
        Task::Boundary => {
            let preds = load_entries(&a.preds, true)?;
            let gts = load_entries(&a.gts, true)?;
            EvalReport::Ap(ap_suite_with(&preds, &gts, |p, g| match (p, g) {
                (Geometry::Mask(p), Geometry::Mask(g)) => boundary_iou(p, g, BOUNDARY_DILATION),
                _ => Err(Error::format("boundary evaluation needs masks")),
            })?)
        }
        Task::Panoptic => {
            let preds = load_panoptic(&a.preds)?;
            let gts = load_panoptic(&a.gts)?;
            let cats = Categories::from_images(gts.iter().chain(&preds))?;
            EvalReport::Pq(pq(&preds, &gts, &cats)?)
        }
    };
    emit(a.out.as_deref(), &to_json_bytes(&report)?)
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        count: a.count,
        shape: a.shape,
        canvas: a.canvas,
        f0: a.f0,
        stages: a.stages,
        top_n: a.top_n,
        seed: a.seed,
        force_dense_active: a.force_dense_active,
    };
    let start = Instant::now();
    let report = run_bench(&cfg)?;
    // wall time stays out of the report so it is reproducible
    eprintln!(
        "bench: {} samples in {:.2} s, reduction {:.4}",
        cfg.count,
        start.elapsed().as_secs_f64(),
        report.reduction_fraction
    );
    emit(a.out.as_deref(), &to_json_bytes(&report)?)
}

fn cmd_convert(a: &ConvertArgs) -> Result<()> {
    let bytes = fs::read(&a.input).map_err(|e| Error::Missing(format!("cannot read {}: {e}", a.input.display())))?;
    let out = if bytes.starts_with(SPS_MAGIC) {
        let t = SpsTensor::read_binary(&bytes[..])?;
        to_json_bytes(&t.to_json())?
    } else {
        let j: SpsJson =
            serde_json::from_slice(&bytes).map_err(|e| Error::format(format!("{}: {e}", a.input.display())))?;
        check_format(&j.format, SPS_JSON_FORMAT)?;
        SpsTensor::from_json(&j)?.to_binary()
    };
    write_atomic(&a.output, &out)
}
