use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::BinaryMask;
use crate::pipeline::RoiInput;

pub const ROIS_FORMAT: &str = "sps-rois/1";
pub const MASKS_FORMAT: &str = "sps-rle/1";
pub const LEDGER_FORMAT: &str = "sps-ledger/1";
pub const BENCH_FORMAT: &str = "sps-bench/1";

/// Pretty JSON with object keys sorted, newline-terminated.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    // serde_json's default map type is ordered, so keys come out sorted
    let v = serde_json::to_value(value)?;
    let mut out = serde_json::to_vec_pretty(&v)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::Missing(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

pub(crate) fn check_format(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::format(format!("expected format {expected:?}, found {found:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRois {
    pub image_id: u64,
    pub width: usize,
    pub height: usize,
    pub rois: Vec<RoiInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoisFile {
    pub format: String,
    pub images: Vec<ImageRois>,
}

/// A reference mask in the frame of RoI `roi` of image `image_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefMaskRecord {
    pub image_id: u64,
    pub roi: usize,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefMaskFile {
    pub format: String,
    pub masks: Vec<RefMaskRecord>,
}

/// A refined RoI: the thresholded `side x side` mask and its paste into
/// the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub image_id: u64,
    pub roi: usize,
    #[serde(rename = "class")]
    pub class_id: u32,
    pub score: f64,
    pub side: usize,
    pub roi_mask: BinaryMask,
    pub image_mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFile {
    pub format: String,
    pub masks: Vec<MaskRecord>,
}
