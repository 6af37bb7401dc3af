//! Operators over [`SpsTensor`](crate::tensor::SpsTensor)s, computed only at
//! active cells, and their dense counterparts over
//! [`DenseTensor`](crate::tensor::DenseTensor)s.

pub mod dense;
mod layers;
mod sparse;
pub mod weights;

pub use layers::{Activation, ConvKernel, LinearTransform, Mlp, OffsetField};
pub use sparse::{conv2d_sparse, deform_conv_sparse, fuse_external, halve_features, pointwise, sfm};
pub use weights::{NamedArray, ParamSource, WeightBundle};

/// Dilations of the three parallel SFM branches.
pub const SFM_DILATIONS: [usize; 3] = [1, 3, 5];

/// Bilinear sample points for a real-valued location: up to four
/// `(y, x, weight)` triples with non-zero weight. Integer coordinates
/// collapse to a single cell with weight exactly 1.
pub(crate) fn bilinear_taps(py: f32, px: f32) -> ([(isize, isize, f32); 4], usize) {
    let y0 = py.floor();
    let x0 = px.floor();
    let ly = py - y0;
    let lx = px - x0;
    let (y0, x0) = (y0 as isize, x0 as isize);
    let candidates = [
        (y0, x0, (1.0 - ly) * (1.0 - lx)),
        (y0, x0 + 1, (1.0 - ly) * lx),
        (y0 + 1, x0, ly * (1.0 - lx)),
        (y0 + 1, x0 + 1, ly * lx),
    ];
    let mut taps = [(0, 0, 0.0); 4];
    let mut n = 0;
    for c in candidates {
        if c.2 != 0.0 {
            taps[n] = c;
            n += 1;
        }
    }
    (taps, n)
}

/// Contracts gathered taps (`taps[t * F_in + i]`) with a kernel into `out`
/// (`F_out` values). Channel-major accumulation starting from the bias.
pub(crate) fn contract(kernel: &ConvKernel, taps: &[f32], out: &mut [f32]) {
    let kk = kernel.size * kernel.size;
    let fin = kernel.in_dim;
    for (o, slot) in out.iter_mut().enumerate() {
        let mut acc = kernel.bias[o];
        let wo = &kernel.weights[o * fin * kk..(o + 1) * fin * kk];
        for i in 0..fin {
            let wi = &wo[i * kk..(i + 1) * kk];
            for t in 0..kk {
                acc += wi[t] * taps[t * fin + i];
            }
        }
        *slot = acc;
    }
}
