//! Debug dumps of [`SpsTensor`]s.
//!
//! Binary layout (little-endian): magic `SPS1`, then `F, H, W, N_A, N_P` as
//! `u32`, the active rows and passive rows as `f32`, and finally the index
//! map row-major as `u32`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SpsTensor;
use crate::error::{Error, Result};

pub const SPS_MAGIC: &[u8; 4] = b"SPS1";
pub const SPS_JSON_FORMAT: &str = "sps-tensor/1";

impl SpsTensor {
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(SPS_MAGIC)?;
        for v in [
            self.features(),
            self.height(),
            self.width(),
            self.num_active(),
            self.num_passive(),
        ] {
            out.write_all(&u32_of(v)?.to_le_bytes())?;
        }
        for v in self.active().iter().chain(self.passive()) {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in self.index_map() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_binary(&mut buf)
            .expect("writing to a Vec cannot fail for u32-sized tensors");
        buf
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<SpsTensor> {
        let mut magic = [0u8; 4];
        input
            .read_exact(&mut magic)
            .map_err(|_| Error::format("truncated SPS header"))?;
        if &magic != SPS_MAGIC {
            return Err(Error::format("bad SPS magic"));
        }
        let mut header = [0usize; 5];
        for slot in header.iter_mut() {
            *slot = read_u32(&mut input)? as usize;
        }
        let [f, h, w, na, np] = header;
        let active = read_f32s(&mut input, na * f)?;
        let passive = read_f32s(&mut input, np * f)?;
        let mut index_map = Vec::with_capacity(h * w);
        for _ in 0..h * w {
            index_map.push(read_u32(&mut input)?);
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(Error::format("trailing bytes after SPS index map"));
        }
        SpsTensor::from_parts(f, h, w, active, passive, index_map)
    }

    pub fn to_json(&self) -> SpsJson {
        let f = self.features();
        SpsJson {
            format: SPS_JSON_FORMAT.to_string(),
            features: f,
            height: self.height(),
            width: self.width(),
            active: self.active().chunks(f).map(<[f32]>::to_vec).collect(),
            passive: self.passive().chunks(f).map(<[f32]>::to_vec).collect(),
            index_map: self.index_map().to_vec(),
        }
    }

    pub fn from_json(json: &SpsJson) -> Result<SpsTensor> {
        if json.format != SPS_JSON_FORMAT {
            return Err(Error::format(format!("unsupported tensor format {:?}", json.format)));
        }
        let flatten = |rows: &[Vec<f32>]| -> Result<Vec<f32>> {
            if rows.iter().any(|r| r.len() != json.features) {
                return Err(Error::format("feature row length differs from `features`"));
            }
            Ok(rows.concat())
        };
        SpsTensor::from_parts(
            json.features,
            json.height,
            json.width,
            flatten(&json.active)?,
            flatten(&json.passive)?,
            json.index_map.clone(),
        )
    }
}

/// JSON mirror of the binary dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpsJson {
    pub format: String,
    pub features: usize,
    pub height: usize,
    pub width: usize,
    pub active: Vec<Vec<f32>>,
    pub passive: Vec<Vec<f32>>,
    pub index_map: Vec<u32>,
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::dim(format!("{v} does not fit in u32")))
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input
        .read_exact(&mut b)
        .map_err(|_| Error::format("truncated SPS payload"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(f32::from_bits(read_u32(input)?));
    }
    Ok(out)
}
