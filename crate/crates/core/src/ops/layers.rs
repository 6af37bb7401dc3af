use crate::error::{Error, Result};
use crate::tensor::FeatureTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    None,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f32) -> f32 {
        match self {
            Activation::None => v,
            Activation::Relu => v.max(0.0),
        }
    }
}

/// `y = act(W x + b)` with `W` stored row-major as `F_out x F_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTransform {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub activation: Activation,
}

impl LinearTransform {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::dim("linear layer dims must be positive"));
        }
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::dim(format!(
                "linear layer {in_dim} -> {out_dim} got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::contract("linear layer parameters must be finite"));
        }
        Ok(LinearTransform {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        LinearTransform {
            in_dim: dim,
            out_dim: dim,
            weights,
            bias: vec![0.0; dim],
            activation: Activation::None,
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LinearTransform {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation: Activation::None,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn forward(&self, input: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; self.out_dim];
        self.apply(input, &mut out);
        out
    }
}

impl FeatureTransform for LinearTransform {
    fn in_dim(&self) -> usize {
        self.in_dim
    }

    fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn apply(&self, input: &[f32], out: &mut [f32]) {
        for (o, slot) in out.iter_mut().enumerate().take(self.out_dim) {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            *slot = self.activation.apply(acc);
        }
    }

    fn macs_per_row(&self) -> u64 {
        (self.in_dim * self.out_dim) as u64
    }
}

/// A stack of linear layers applied in sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<LinearTransform>,
}

impl Mlp {
    pub fn new(layers: Vec<LinearTransform>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::dim("an MLP needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::dim(format!(
                    "MLP layer output {} does not feed input {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn identity(dim: usize) -> Self {
        Mlp {
            layers: vec![LinearTransform::identity(dim)],
        }
    }

    pub fn layers(&self) -> &[LinearTransform] {
        &self.layers
    }

    pub fn forward(&self, input: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; self.out_dim()];
        self.apply(input, &mut out);
        out
    }
}

impl From<LinearTransform> for Mlp {
    fn from(layer: LinearTransform) -> Self {
        Mlp { layers: vec![layer] }
    }
}

impl FeatureTransform for Mlp {
    fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    fn apply(&self, input: &[f32], out: &mut [f32]) {
        if self.layers.len() == 1 {
            self.layers[0].apply(input, out);
            return;
        }
        let mut cur = input.to_vec();
        let last = self.layers.len() - 1;
        for layer in &self.layers[..last] {
            let mut next = vec![0.0; layer.out_dim];
            layer.apply(&cur, &mut next);
            cur = next;
        }
        self.layers[last].apply(&cur, out);
    }

    fn macs_per_row(&self) -> u64 {
        self.layers.iter().map(|l| l.macs_per_row()).sum()
    }
}

/// A square, centered convolution kernel, `[F_out, F_in, K, K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub in_dim: usize,
    pub out_dim: usize,
    pub size: usize,
    pub dilation: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvKernel {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        size: usize,
        dilation: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::dim(format!("kernel size {size} must be odd")));
        }
        if dilation == 0 || in_dim == 0 || out_dim == 0 {
            return Err(Error::dim("kernel dims and dilation must be positive"));
        }
        if weights.len() != out_dim * in_dim * size * size || bias.len() != out_dim {
            return Err(Error::dim("kernel weight or bias length mismatch"));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::contract("kernel parameters must be finite"));
        }
        Ok(ConvKernel {
            in_dim,
            out_dim,
            size,
            dilation,
            weights,
            bias,
        })
    }

    /// Identity at the center tap, zero elsewhere.
    pub fn delta(dim: usize, size: usize, dilation: usize) -> Self {
        let kk = size * size;
        let center = kk / 2;
        let mut weights = vec![0.0; dim * dim * kk];
        for o in 0..dim {
            weights[(o * dim + o) * kk + center] = 1.0;
        }
        ConvKernel {
            in_dim: dim,
            out_dim: dim,
            size,
            dilation,
            weights,
            bias: vec![0.0; dim],
        }
    }

    pub fn zeros(dim: usize, size: usize, dilation: usize) -> Self {
        ConvKernel {
            in_dim: dim,
            out_dim: dim,
            size,
            dilation,
            weights: vec![0.0; dim * dim * size * size],
            bias: vec![0.0; dim],
        }
    }

    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f32 {
        self.weights[((o * self.in_dim + i) * self.size + ky) * self.size + kx]
    }

    /// Tap offsets `(dy, dx)` in row-major kernel order.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let r = (self.size / 2) as isize;
        let d = self.dilation as isize;
        (-r..=r)
            .flat_map(|ky| (-r..=r).map(move |kx| (ky * d, kx * d)))
            .collect()
    }

    pub fn taps(&self) -> usize {
        self.size * self.size
    }
}

/// Real-valued sampling offsets, `K * K` per active cell, added to the
/// kernel's regular tap grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetField {
    pub taps: usize,
    pub offsets: Vec<(f32, f32)>,
}

impl OffsetField {
    pub fn new(taps: usize, offsets: Vec<(f32, f32)>) -> Result<Self> {
        if taps == 0 || !offsets.len().is_multiple_of(taps) {
            return Err(Error::dim("offset list is not a multiple of the tap count"));
        }
        if offsets.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::contract("offsets must be finite"));
        }
        Ok(OffsetField { taps, offsets })
    }

    pub fn zeros(taps: usize, cells: usize) -> Self {
        OffsetField {
            taps,
            offsets: vec![(0.0, 0.0); taps * cells],
        }
    }

    pub fn cells(&self) -> usize {
        self.offsets.len() / self.taps
    }

    pub fn for_cell(&self, cell: usize) -> &[(f32, f32)] {
        &self.offsets[cell * self.taps..(cell + 1) * self.taps]
    }
}
