use rayon::prelude::*;

use super::{bilinear_taps, contract, ConvKernel, LinearTransform, OffsetField, SFM_DILATIONS};
use crate::error::{Error, Result};
use crate::tensor::{FeatureTransform, SpsTensor};

/// Applies `t` to every active row. Passive rows and the index map are left
/// alone, so a change of feature size is only legal on fully active tensors.
pub fn pointwise(s: &SpsTensor, t: &LinearTransform) -> Result<SpsTensor> {
    if t.in_dim != s.features() {
        return Err(Error::dim(format!(
            "pointwise expects F_in = {}, tensor has F = {}",
            t.in_dim,
            s.features()
        )));
    }
    let active = map_rows(s.active(), s.features(), t);
    s.with_active(t.out_dim, active)
}

/// Halves the feature size of active and passive rows with a shared linear map.
pub fn halve_features(s: &SpsTensor, t: &LinearTransform) -> Result<SpsTensor> {
    let f = s.features();
    if !f.is_multiple_of(2) {
        return Err(Error::dim(format!("cannot halve odd feature size {f}")));
    }
    if t.in_dim != f || t.out_dim != f / 2 {
        return Err(Error::dim(format!(
            "halving map must be {f} -> {}, got {} -> {}",
            f / 2,
            t.in_dim,
            t.out_dim
        )));
    }
    let active = map_rows(s.active(), f, t);
    let passive = map_rows(s.passive(), f, t);
    s.with_rows(f / 2, active, passive)
}

/// Convolution evaluated at active cells only, gathering neighbors through
/// the index map with zero padding outside the grid.
pub fn conv2d_sparse(s: &SpsTensor, k: &ConvKernel) -> Result<SpsTensor> {
    check_residual_kernel(s, k)?;
    let active = conv_active_rows(s, k);
    s.with_active(s.features(), active)
}

/// Deformable convolution at active cells: tap `t` of the cell at `(y, x)`
/// reads the bilinearly interpolated feature at
/// `(y + dy_t + off_y, x + dx_t + off_x)`, where `(dy_t, dx_t)` is the
/// kernel's regular tap offset.
pub fn deform_conv_sparse(s: &SpsTensor, k: &ConvKernel, off: &OffsetField) -> Result<SpsTensor> {
    check_residual_kernel(s, k)?;
    if off.taps != k.taps() {
        return Err(Error::dim(format!(
            "offset field has {} taps per cell, kernel has {}",
            off.taps,
            k.taps()
        )));
    }
    if off.cells() != s.num_active() {
        return Err(Error::dim(format!(
            "offset field covers {} cells, tensor has {} active",
            off.cells(),
            s.num_active()
        )));
    }
    let f = s.features();
    let cells = s.active_cells();
    let grid = k.offsets();
    let mut active = vec![0.0; s.active().len()];
    active.par_chunks_mut(k.out_dim).enumerate().for_each(|(row, out)| {
        let c = cells[row];
        let mut taps = vec![0.0; grid.len() * f];
        for (t, (&(gy, gx), &(oy, ox))) in grid.iter().zip(off.for_cell(row)).enumerate() {
            let py = c.y as f32 + gy as f32 + oy;
            let px = c.x as f32 + gx as f32 + ox;
            sample_bilinear(s, py, px, &mut taps[t * f..(t + 1) * f]);
        }
        contract(k, &taps, out);
    });
    s.with_active(f, active)
}

/// Sum of three parallel 3x3 convolutions with dilations 1, 3 and 5, each
/// with its own bias.
pub fn sfm(s: &SpsTensor, k1: &ConvKernel, k3: &ConvKernel, k5: &ConvKernel) -> Result<SpsTensor> {
    for (k, d) in [k1, k3, k5].into_iter().zip(SFM_DILATIONS) {
        if k.size != 3 || k.dilation != d {
            return Err(Error::dim(format!(
                "SFM branch expects a 3x3 kernel at dilation {d}, got {}x{} at {}",
                k.size, k.size, k.dilation
            )));
        }
        check_residual_kernel(s, k)?;
    }
    let a = conv_active_rows(s, k1);
    let b = conv_active_rows(s, k3);
    let c = conv_active_rows(s, k5);
    let active = a.iter().zip(&b).zip(&c).map(|((x, y), z)| x + y + z).collect();
    s.with_active(s.features(), active)
}

/// `active_row += t(concat(active_row, ext_row))`, with `ext` holding one
/// `F_e`-vector per active row.
pub fn fuse_external<T: FeatureTransform>(s: &SpsTensor, ext: &[f32], t: &T) -> Result<SpsTensor> {
    let f = s.features();
    let n = s.num_active();
    if t.out_dim() != f || t.in_dim() < f {
        return Err(Error::dim(format!(
            "fusion map must be (F + F_e) -> F with F = {f}, got {} -> {}",
            t.in_dim(),
            t.out_dim()
        )));
    }
    let fe = t.in_dim() - f;
    if ext.len() != n * fe {
        return Err(Error::dim(format!(
            "external features hold {} values, expected {n} rows of {fe}",
            ext.len()
        )));
    }
    let mut active = s.active().to_vec();
    active.par_chunks_mut(f).enumerate().for_each(|(row, dst)| {
        let mut cat = Vec::with_capacity(f + fe);
        cat.extend_from_slice(dst);
        cat.extend_from_slice(&ext[row * fe..(row + 1) * fe]);
        let mut delta = vec![0.0; f];
        t.apply(&cat, &mut delta);
        for (d, v) in dst.iter_mut().zip(&delta) {
            *d += v;
        }
    });
    s.with_active(f, active)
}

fn check_residual_kernel(s: &SpsTensor, k: &ConvKernel) -> Result<()> {
    if k.in_dim != s.features() || k.out_dim != s.features() {
        return Err(Error::dim(format!(
            "kernel maps {} -> {}, tensor has F = {}",
            k.in_dim,
            k.out_dim,
            s.features()
        )));
    }
    Ok(())
}

fn map_rows<T: FeatureTransform>(rows: &[f32], f: usize, t: &T) -> Vec<f32> {
    let n = rows.len() / f;
    let mut out = vec![0.0; n * t.out_dim()];
    if n == 0 {
        return out;
    }
    out.par_chunks_mut(t.out_dim())
        .zip(rows.par_chunks(f))
        .for_each(|(dst, src)| t.apply(src, dst));
    out
}

fn conv_active_rows(s: &SpsTensor, k: &ConvKernel) -> Vec<f32> {
    let cells = s.active_cells();
    let offsets = k.offsets();
    let mut out = vec![0.0; cells.len() * k.out_dim];
    out.par_chunks_mut(k.out_dim)
        .zip(cells.par_iter())
        .for_each(|(dst, &c)| {
            let taps = s
                .gather_neighborhood(c, &offsets)
                .expect("active cells are in-grid and active");
            contract(k, &taps, dst);
        });
    out
}

fn sample_bilinear(s: &SpsTensor, py: f32, px: f32, out: &mut [f32]) {
    out.fill(0.0);
    let (taps, n) = bilinear_taps(py, px);
    if n == 1 {
        if let Some(row) = s.feature_at_signed(taps[0].0, taps[0].1) {
            out.copy_from_slice(row);
        }
        return;
    }
    for &(y, x, w) in &taps[..n] {
        if let Some(row) = s.feature_at_signed(y, x) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
    }
}
