//! Dense counterparts of the sparse operators, evaluated at every cell.
//!
//! These back the dense refinement pipeline used as the cost and accuracy
//! baseline. Each follows the same accumulation order as its sparse twin so
//! a fully active sparse run reproduces the dense result.

use rayon::prelude::*;

use super::{bilinear_taps, contract, ConvKernel, LinearTransform, SFM_DILATIONS};
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, FeatureTransform};

/// Applies a per-cell feature transform (a 1x1 convolution).
pub fn pointwise_dense<T: FeatureTransform>(d: &DenseTensor, t: &T) -> Result<DenseTensor> {
    if t.in_dim() != d.features() {
        return Err(Error::dim("pointwise input size mismatch"));
    }
    let f = d.features();
    let cells = d.to_cell_major();
    let mut out = vec![0.0; d.height() * d.width() * t.out_dim()];
    out.par_chunks_mut(t.out_dim())
        .zip(cells.par_chunks(f))
        .for_each(|(dst, src)| t.apply(src, dst));
    DenseTensor::from_cell_major(t.out_dim(), d.height(), d.width(), &out)
}

pub fn halve_dense(d: &DenseTensor, t: &LinearTransform) -> Result<DenseTensor> {
    if !d.features().is_multiple_of(2) || t.out_dim != d.features() / 2 {
        return Err(Error::dim("halving map must be F -> F/2 with F even"));
    }
    pointwise_dense(d, t)
}

/// Zero-padded convolution at every cell, `F -> F`.
pub fn conv2d_dense(d: &DenseTensor, k: &ConvKernel) -> Result<DenseTensor> {
    let (f, h, w) = (d.features(), d.height(), d.width());
    if k.in_dim != f {
        return Err(Error::dim("kernel input size mismatch"));
    }
    let cells = d.to_cell_major();
    let offsets = k.offsets();
    let mut out = vec![0.0; h * w * k.out_dim];
    out.par_chunks_mut(k.out_dim).enumerate().for_each(|(cell, dst)| {
        let (y, x) = ((cell / w) as isize, (cell % w) as isize);
        let mut taps = vec![0.0; offsets.len() * f];
        for (t, &(dy, dx)) in offsets.iter().enumerate() {
            let (yy, xx) = (y + dy, x + dx);
            if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                let src = (yy as usize * w + xx as usize) * f;
                taps[t * f..(t + 1) * f].copy_from_slice(&cells[src..src + f]);
            }
        }
        contract(k, &taps, dst);
    });
    DenseTensor::from_cell_major(k.out_dim, h, w, &out)
}

/// Deformable convolution at every cell; `offsets` holds `K * K` entries per
/// cell in row-major cell order.
pub fn deform_conv_dense(d: &DenseTensor, k: &ConvKernel, offsets: &[(f32, f32)]) -> Result<DenseTensor> {
    let (f, h, w) = (d.features(), d.height(), d.width());
    let kk = k.taps();
    if offsets.len() != h * w * kk || k.in_dim != f {
        return Err(Error::dim("offset field or kernel does not match the grid"));
    }
    let cells = d.to_cell_major();
    let grid = k.offsets();
    let mut out = vec![0.0; h * w * k.out_dim];
    out.par_chunks_mut(k.out_dim).enumerate().for_each(|(cell, dst)| {
        let (y, x) = (cell / w, cell % w);
        let mut taps = vec![0.0; kk * f];
        for t in 0..kk {
            let (oy, ox) = offsets[cell * kk + t];
            let py = y as f32 + grid[t].0 as f32 + oy;
            let px = x as f32 + grid[t].1 as f32 + ox;
            let (corners, n) = bilinear_taps(py, px);
            let slot = &mut taps[t * f..(t + 1) * f];
            for &(cy, cx, cw) in &corners[..n] {
                if cy < 0 || cx < 0 || cy as usize >= h || cx as usize >= w {
                    continue;
                }
                let src = (cy as usize * w + cx as usize) * f;
                for (s, v) in slot.iter_mut().zip(&cells[src..src + f]) {
                    *s += cw * v;
                }
            }
        }
        contract(k, &taps, dst);
    });
    DenseTensor::from_cell_major(k.out_dim, h, w, &out)
}

pub fn sfm_dense(d: &DenseTensor, k1: &ConvKernel, k3: &ConvKernel, k5: &ConvKernel) -> Result<DenseTensor> {
    for (k, dil) in [k1, k3, k5].into_iter().zip(SFM_DILATIONS) {
        if k.size != 3 || k.dilation != dil {
            return Err(Error::dim("SFM needs 3x3 kernels at dilations 1, 3, 5"));
        }
    }
    let a = conv2d_dense(d, k1)?;
    let b = conv2d_dense(d, k3)?;
    let c = conv2d_dense(d, k5)?;
    let sum = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .zip(c.as_slice())
        .map(|((x, y), z)| x + y + z)
        .collect();
    DenseTensor::new(a.features(), a.height(), a.width(), sum)
}

/// `cell += t(concat(cell, ext_cell))` at every cell; `ext` is cell-major.
pub fn fuse_external_dense<T: FeatureTransform>(d: &DenseTensor, ext: &[f32], t: &T) -> Result<DenseTensor> {
    let (f, h, w) = (d.features(), d.height(), d.width());
    if t.out_dim() != f || t.in_dim() < f {
        return Err(Error::dim("fusion map must be (F + F_e) -> F"));
    }
    let fe = t.in_dim() - f;
    if ext.len() != h * w * fe {
        return Err(Error::dim("external feature grid has the wrong size"));
    }
    let mut cells = d.to_cell_major();
    cells.par_chunks_mut(f).enumerate().for_each(|(cell, dst)| {
        let mut cat = Vec::with_capacity(f + fe);
        cat.extend_from_slice(dst);
        cat.extend_from_slice(&ext[cell * fe..(cell + 1) * fe]);
        let mut delta = vec![0.0; f];
        t.apply(&cat, &mut delta);
        for (v, dv) in dst.iter_mut().zip(&delta) {
            *v += dv;
        }
    });
    DenseTensor::from_cell_major(f, h, w, &cells)
}

/// Dense subdivision: every cell spawns four children through
/// `child_maps[2 * dy + dx]`.
pub fn subdivide_dense<T: FeatureTransform>(d: &DenseTensor, child_maps: &[T]) -> Result<DenseTensor> {
    let (f, h, w) = (d.features(), d.height(), d.width());
    if child_maps.len() != 4 || child_maps.iter().any(|m| m.in_dim() != f || m.out_dim() != f) {
        return Err(Error::dim("subdivision needs four F -> F transforms"));
    }
    let cells = d.to_cell_major();
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0; h2 * w2 * f];
    out.par_chunks_mut(f).enumerate().for_each(|(child, dst)| {
        let (y2, x2) = (child / w2, child % w2);
        let parent = (y2 / 2) * w + x2 / 2;
        let j = 2 * (y2 % 2) + x2 % 2;
        child_maps[j].apply(&cells[parent * f..(parent + 1) * f], dst);
    });
    DenseTensor::from_cell_major(f, h2, w2, &out)
}
