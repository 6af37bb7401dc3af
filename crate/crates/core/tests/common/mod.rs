#![allow(dead_code)]

pub mod cli;
pub mod gen;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparseseg::ops::dense::{
    conv2d_dense, deform_conv_dense, fuse_external_dense, halve_dense, pointwise_dense, sfm_dense,
};
use sparseseg::ops::{
    conv2d_sparse, deform_conv_sparse, fuse_external, halve_features, pointwise, sfm, Activation, ConvKernel,
    LinearTransform, Mlp, OffsetField,
};
use sparseseg::tensor::{CellCoord, DenseTensor, SpsTensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| r.random_range(-1.0f32..1.0)).collect()
}

pub fn rand_dense(r: &mut ChaCha8Rng, f: usize, h: usize, w: usize) -> DenseTensor {
    DenseTensor::new(f, h, w, rand_vec(r, f * h * w)).unwrap()
}

/// Each cell active with a per-instance probability, listed in shuffled
/// order so nothing relies on the caller sorting.
pub fn rand_cells(r: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<CellCoord> {
    let p: f64 = r.random_range(0.0..1.0);
    let mut cells: Vec<CellCoord> = (0..h).flat_map(|y| (0..w).map(move |x| CellCoord::new(y, x))).collect();
    cells.retain(|_| r.random_bool(p));
    for i in (1..cells.len()).rev() {
        let j = r.random_range(0..=i);
        cells.swap(i, j);
    }
    cells
}

pub fn rand_linear(r: &mut ChaCha8Rng, fin: usize, fout: usize, act: Activation) -> LinearTransform {
    LinearTransform::new(fin, fout, rand_vec(r, fin * fout), rand_vec(r, fout), act).unwrap()
}

pub fn rand_mlp(r: &mut ChaCha8Rng, fin: usize, hidden: usize, fout: usize) -> Mlp {
    Mlp::new(vec![
        rand_linear(r, fin, hidden, Activation::Relu),
        rand_linear(r, hidden, fout, Activation::None),
    ])
    .unwrap()
}

pub fn rand_conv(r: &mut ChaCha8Rng, f: usize, size: usize, dilation: usize) -> ConvKernel {
    ConvKernel::new(f, f, size, dilation, rand_vec(r, f * f * size * size), rand_vec(r, f)).unwrap()
}

pub fn rand_offsets(r: &mut ChaCha8Rng, taps: usize, cells: usize) -> Vec<(f32, f32)> {
    (0..taps * cells)
        .map(|_| (r.random_range(-2.0f32..2.0), r.random_range(-2.0f32..2.0)))
        .collect()
}

pub fn offset_field(taps: usize, per_cell: Vec<(f32, f32)>) -> OffsetField {
    OffsetField::new(taps, per_cell).unwrap()
}

/// Reads `X[c, y, x]` with zeros outside the grid.
pub fn at(d: &DenseTensor, c: usize, y: isize, x: isize) -> f64 {
    if y < 0 || x < 0 || y as usize >= d.height() || x as usize >= d.width() {
        0.0
    } else {
        d.get(c, y as usize, x as usize) as f64
    }
}

/// Textbook linear layer in f64.
pub fn naive_linear(t: &LinearTransform, x: &[f64]) -> Vec<f64> {
    (0..t.out_dim)
        .map(|o| {
            let mut acc = t.bias[o] as f64;
            let row = &t.weights[o * t.in_dim..(o + 1) * t.in_dim];
            acc += row.iter().zip(x).map(|(w, v)| *w as f64 * v).sum::<f64>();
            match t.activation {
                Activation::Relu => acc.max(0.0),
                Activation::None => acc,
            }
        })
        .collect()
}

pub fn naive_mlp(m: &Mlp, x: &[f64]) -> Vec<f64> {
    m.layers().iter().fold(x.to_vec(), |v, l| naive_linear(l, &v))
}

/// Direct convolution at one cell, zero padded, in f64.
pub fn naive_conv_at(d: &DenseTensor, k: &ConvKernel, y: usize, x: usize) -> Vec<f64> {
    let r = (k.size / 2) as isize;
    let dil = k.dilation as isize;
    (0..k.out_dim)
        .map(|o| {
            let mut acc = k.bias[o] as f64;
            for i in 0..k.in_dim {
                for ky in 0..k.size {
                    for kx in 0..k.size {
                        let yy = y as isize + (ky as isize - r) * dil;
                        let xx = x as isize + (kx as isize - r) * dil;
                        acc += k.weight(o, i, ky, kx) as f64 * at(d, i, yy, xx);
                    }
                }
            }
            acc
        })
        .collect()
}

/// Bilinear read at a real position, corners outside the grid count as zero.
pub fn naive_bilinear(d: &DenseTensor, c: usize, py: f64, px: f64) -> f64 {
    let (y0, x0) = (py.floor(), px.floor());
    let (ly, lx) = (py - y0, px - x0);
    let (y0, x0) = (y0 as isize, x0 as isize);
    (1.0 - ly) * (1.0 - lx) * at(d, c, y0, x0)
        + (1.0 - ly) * lx * at(d, c, y0, x0 + 1)
        + ly * (1.0 - lx) * at(d, c, y0 + 1, x0)
        + ly * lx * at(d, c, y0 + 1, x0 + 1)
}

pub fn naive_deform_at(d: &DenseTensor, k: &ConvKernel, y: usize, x: usize, offs: &[(f32, f32)]) -> Vec<f64> {
    let r = (k.size / 2) as isize;
    let dil = k.dilation as isize;
    (0..k.out_dim)
        .map(|o| {
            let mut acc = k.bias[o] as f64;
            for ky in 0..k.size {
                for kx in 0..k.size {
                    let (oy, ox) = offs[ky * k.size + kx];
                    let py = y as f64 + ((ky as isize - r) * dil) as f64 + oy as f64;
                    let px = x as f64 + ((kx as isize - r) * dil) as f64 + ox as f64;
                    for i in 0..k.in_dim {
                        acc += k.weight(o, i, ky, kx) as f64 * naive_bilinear(d, i, py, px);
                    }
                }
            }
            acc
        })
        .collect()
}

pub fn cell_values(d: &DenseTensor, y: usize, x: usize) -> Vec<f64> {
    (0..d.features()).map(|c| d.get(c, y, x) as f64).collect()
}

/// `|a - b| <= tol * max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Checks a sparse operator result: active cells against `expect(cell)`,
/// passive rows and the index map bit-identical to the input.
pub fn check_sparse(
    input: &SpsTensor,
    output: &SpsTensor,
    tol: f64,
    passive_kept: bool,
    expect: impl Fn(CellCoord) -> Vec<f64>,
) -> Result<(), String> {
    output.validate().map_err(|e| e.to_string())?;
    if output.index_map() != input.index_map() {
        return Err("index map changed".into());
    }
    if passive_kept {
        let same = input.passive().len() == output.passive().len()
            && input
                .passive()
                .iter()
                .zip(output.passive())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err("passive rows changed".into());
        }
    }
    for (row, c) in output.active_cells().into_iter().enumerate() {
        let got = output.row(row);
        let want = expect(c);
        if got.len() != want.len() {
            return Err(format!("cell {c:?}: {} features, expected {}", got.len(), want.len()));
        }
        for (g, w) in got.iter().zip(&want) {
            if !close(*g as f64, *w, tol) {
                return Err(format!("cell {c:?}: {g} vs {w}"));
            }
        }
    }
    Ok(())
}

/// Tolerance of sparse results against the dense operator.
pub const SPARSE_TOL: f64 = 1e-6;
/// Tolerance of the dense operator against the f64 reference.
pub const REFERENCE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Pointwise,
    Halve,
    Conv1,
    Conv3,
    Conv5,
    Deform,
    Sfm,
    Fuse,
}

impl OpKind {
    pub const ALL: [OpKind; 8] = [
        OpKind::Pointwise,
        OpKind::Halve,
        OpKind::Conv1,
        OpKind::Conv3,
        OpKind::Conv5,
        OpKind::Deform,
        OpKind::Sfm,
        OpKind::Fuse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Pointwise => "pointwise",
            OpKind::Halve => "halve_features",
            OpKind::Conv1 => "conv2d (dilation 1)",
            OpKind::Conv3 => "conv2d (dilation 3)",
            OpKind::Conv5 => "conv2d (dilation 5)",
            OpKind::Deform => "deform_conv",
            OpKind::Sfm => "sfm",
            OpKind::Fuse => "fuse_external",
        }
    }
}

fn compare_dense(a: &DenseTensor, y: usize, x: usize, want: &[f64], tol: f64) -> Result<(), String> {
    for (c, w) in want.iter().enumerate() {
        let g = a.get(c, y, x) as f64;
        if !close(g, *w, tol) {
            return Err(format!(
                "dense operator at ({y}, {x}) channel {c}: {g} vs reference {w}"
            ));
        }
    }
    Ok(())
}

/// Expected f64 values at a cell.
type Reference = Box<dyn Fn(usize, usize) -> Vec<f64>>;

/// One randomized instance (grid up to 16x16, F up to 8): the sparse
/// operator must match the dense operator at active cells and keep passive
/// rows, and the dense operator must match an f64 reference everywhere.
pub fn run_case(kind: OpKind, seed: u64) -> Result<(), String> {
    let mut r = rng(seed ^ (kind as u64) << 56);
    let h = r.random_range(1..=16);
    let w = r.random_range(1..=16);
    let f = if kind == OpKind::Halve {
        2 * r.random_range(1..=4)
    } else {
        r.random_range(1..=8)
    };
    let d = rand_dense(&mut r, f, h, w);
    let cells = rand_cells(&mut r, h, w);
    let s = SpsTensor::from_dense(&d, &cells).map_err(|e| e.to_string())?;
    let err = |e: sparseseg::Error| e.to_string();

    let (sparse_out, dense_out, passive_kept, reference): (SpsTensor, DenseTensor, bool, Reference) = match kind {
        OpKind::Pointwise => {
            let act = if r.random_bool(0.5) {
                Activation::Relu
            } else {
                Activation::None
            };
            let t = rand_linear(&mut r, f, f, act);
            let so = pointwise(&s, &t).map_err(err)?;
            let dout = pointwise_dense(&d, &t).map_err(err)?;
            let dd = d.clone();
            (
                so,
                dout,
                true,
                Box::new(move |y, x| naive_linear(&t, &cell_values(&dd, y, x))),
            )
        }
        OpKind::Halve => {
            let t = rand_linear(&mut r, f, f / 2, Activation::None);
            let so = halve_features(&s, &t).map_err(err)?;
            let dout = halve_dense(&d, &t).map_err(err)?;
            let dd = d.clone();
            (
                so,
                dout,
                false,
                Box::new(move |y, x| naive_linear(&t, &cell_values(&dd, y, x))),
            )
        }
        OpKind::Conv1 | OpKind::Conv3 | OpKind::Conv5 => {
            let dil = match kind {
                OpKind::Conv1 => 1,
                OpKind::Conv3 => 3,
                _ => 5,
            };
            let k = rand_conv(&mut r, f, 3, dil);
            let so = conv2d_sparse(&s, &k).map_err(err)?;
            let dout = conv2d_dense(&d, &k).map_err(err)?;
            let dd = d.clone();
            (so, dout, true, Box::new(move |y, x| naive_conv_at(&dd, &k, y, x)))
        }
        OpKind::Deform => {
            let k = rand_conv(&mut r, f, 3, 1);
            let grid_offs = rand_offsets(&mut r, 9, h * w);
            let active_offs: Vec<(f32, f32)> = s
                .active_cells()
                .iter()
                .flat_map(|c| grid_offs[c.linear(w) * 9..(c.linear(w) + 1) * 9].to_vec())
                .collect();
            let so = deform_conv_sparse(&s, &k, &offset_field(9, active_offs)).map_err(err)?;
            let dout = deform_conv_dense(&d, &k, &grid_offs).map_err(err)?;
            let dd = d.clone();
            (
                so,
                dout,
                true,
                Box::new(move |y, x| {
                    let i = y * w + x;
                    naive_deform_at(&dd, &k, y, x, &grid_offs[i * 9..(i + 1) * 9])
                }),
            )
        }
        OpKind::Sfm => {
            let k1 = rand_conv(&mut r, f, 3, 1);
            let k3 = rand_conv(&mut r, f, 3, 3);
            let k5 = rand_conv(&mut r, f, 3, 5);
            let so = sfm(&s, &k1, &k3, &k5).map_err(err)?;
            let dout = sfm_dense(&d, &k1, &k3, &k5).map_err(err)?;
            let dd = d.clone();
            (
                so,
                dout,
                true,
                Box::new(move |y, x| {
                    let a = naive_conv_at(&dd, &k1, y, x);
                    let b = naive_conv_at(&dd, &k3, y, x);
                    let c = naive_conv_at(&dd, &k5, y, x);
                    (0..a.len()).map(|i| a[i] + b[i] + c[i]).collect()
                }),
            )
        }
        OpKind::Fuse => {
            let fe = r.random_range(1..=8);
            let m = rand_mlp(&mut r, f + fe, f, f);
            let ext = rand_vec(&mut r, h * w * fe);
            let active_ext: Vec<f32> = s
                .active_cells()
                .iter()
                .flat_map(|c| ext[c.linear(w) * fe..(c.linear(w) + 1) * fe].to_vec())
                .collect();
            let so = fuse_external(&s, &active_ext, &m).map_err(err)?;
            let dout = fuse_external_dense(&d, &ext, &m).map_err(err)?;
            let dd = d.clone();
            (
                so,
                dout,
                true,
                Box::new(move |y, x| {
                    let mut cat = cell_values(&dd, y, x);
                    let i = y * w + x;
                    cat.extend(ext[i * fe..(i + 1) * fe].iter().map(|&v| v as f64));
                    let delta = naive_mlp(&m, &cat);
                    cell_values(&dd, y, x).iter().zip(&delta).map(|(a, b)| a + b).collect()
                }),
            )
        }
    };

    for y in 0..h {
        for x in 0..w {
            compare_dense(&dense_out, y, x, &reference(y, x), REFERENCE_TOL)?;
        }
    }
    check_sparse(&s, &sparse_out, SPARSE_TOL, passive_kept, |c| {
        cell_values(&dense_out, c.y, c.x)
    })?;
    if kind == OpKind::Halve {
        // passive rows go through the same map
        let full = sparse_out.to_dense();
        for y in 0..h {
            for x in 0..w {
                compare_dense(&full, y, x, &cell_values(&dense_out, y, x), SPARSE_TOL)?;
            }
        }
    }
    Ok(())
}
