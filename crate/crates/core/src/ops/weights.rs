//! Flat binary weight bundles.
//!
//! A bundle is a sequence of records, little-endian, until end of input:
//! `name_len: u16`, `name: [u8; name_len]` (UTF-8), `rank: u8`,
//! `dims: [u32; rank]`, `data: [f32; prod(dims)]`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Activation, ConvKernel, LinearTransform, Mlp};
use crate::error::{Error, Result};

/// Standard deviation of arrays synthesized for missing names.
pub const INIT_STD: f32 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightBundle {
    arrays: BTreeMap<String, NamedArray>,
}

impl WeightBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<()> {
        let name = name.into();
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::dim(format!("array {name:?} dims do not match data")));
        }
        self.arrays.insert(name, NamedArray { dims, data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.get(name)
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(String::as_str)
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        let mut bundle = WeightBundle::new();
        while cur.pos < bytes.len() {
            let name_len = u16::from_le_bytes(cur.take::<2>()?) as usize;
            let name = std::str::from_utf8(cur.slice(name_len)?)
                .map_err(|_| Error::format("array name is not UTF-8"))?
                .to_string();
            let rank = cur.take::<1>()?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(u32::from_le_bytes(cur.take::<4>()?) as usize);
            }
            let n: usize = dims.iter().product();
            let raw = cur.slice(n.checked_mul(4).ok_or_else(|| Error::format("array too large"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            if bundle.arrays.contains_key(&name) {
                return Err(Error::format(format!("duplicate array {name:?}")));
            }
            bundle.arrays.insert(name, NamedArray { dims, data });
        }
        Ok(bundle)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for (name, arr) in &self.arrays {
            let len = u16::try_from(name.len()).map_err(|_| Error::format("array name too long"))?;
            out.write_all(&len.to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            let rank = u8::try_from(arr.dims.len()).map_err(|_| Error::format("rank too large"))?;
            out.write_all(&[rank])?;
            for &d in &arr.dims {
                let d = u32::try_from(d).map_err(|_| Error::format("dimension too large"))?;
                out.write_all(&d.to_le_bytes())?;
            }
            for v in &arr.data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Resolves named parameters from a bundle, synthesizing any missing array
/// from a Gaussian seeded by `(seed, name)` so lookups are order-independent.
#[derive(Debug, Clone)]
pub struct ParamSource<'a> {
    bundle: Option<&'a WeightBundle>,
    seed: u64,
}

impl<'a> ParamSource<'a> {
    pub fn new(bundle: Option<&'a WeightBundle>, seed: u64) -> Self {
        ParamSource { bundle, seed }
    }

    pub fn array(&self, name: &str, dims: &[usize]) -> Result<Vec<f32>> {
        if let Some(arr) = self.bundle.and_then(|b| b.get(name)) {
            if arr.dims != dims {
                return Err(Error::dim(format!(
                    "array {name:?} has dims {:?}, expected {dims:?}",
                    arr.dims
                )));
            }
            return Ok(arr.data.clone());
        }
        let n: usize = dims.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name.as_bytes()));
        let normal = Normal::new(0.0f32, INIT_STD).expect("positive std");
        Ok((0..n).map(|_| normal.sample(&mut rng)).collect())
    }

    pub fn linear(
        &self,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Result<LinearTransform> {
        let w = self.array(&format!("{prefix}.weight"), &[out_dim, in_dim])?;
        let b = self.array(&format!("{prefix}.bias"), &[out_dim])?;
        LinearTransform::new(in_dim, out_dim, w, b, activation)
    }

    /// Two-layer MLP `in -> hidden (relu) -> out` under `prefix.0` / `prefix.1`.
    pub fn mlp2(&self, prefix: &str, in_dim: usize, hidden: usize, out_dim: usize) -> Result<Mlp> {
        Mlp::new(vec![
            self.linear(&format!("{prefix}.0"), in_dim, hidden, Activation::Relu)?,
            self.linear(&format!("{prefix}.1"), hidden, out_dim, Activation::None)?,
        ])
    }

    pub fn conv(&self, prefix: &str, dim: usize, size: usize, dilation: usize) -> Result<ConvKernel> {
        let w = self.array(&format!("{prefix}.weight"), &[dim, dim, size, size])?;
        let b = self.array(&format!("{prefix}.bias"), &[dim])?;
        ConvKernel::new(dim, dim, size, dilation, w, b)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn slice(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("truncated weight bundle"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let s = self.slice(N)?;
        Ok(s.try_into().expect("slice has length N"))
    }
}
