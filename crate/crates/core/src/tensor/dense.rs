use crate::error::{Error, Result};

/// A `[F, H, W]` feature map, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    features: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl DenseTensor {
    pub fn new(features: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if features == 0 || height == 0 || width == 0 {
            return Err(Error::dim(format!(
                "dense tensor dims must be positive, got [{features}, {height}, {width}]"
            )));
        }
        if data.len() != features * height * width {
            return Err(Error::dim(format!(
                "expected {} values for [{features}, {height}, {width}], got {}",
                features * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("dense tensor entries must be finite"));
        }
        Ok(DenseTensor {
            features,
            height,
            width,
            data,
        })
    }

    pub fn zeros(features: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(features, height, width, vec![0.0; features * height * width])
    }

    /// Builds a tensor from per-cell feature vectors laid out row-major over
    /// the grid (`cells[(y * W + x) * F + f]`).
    pub fn from_cell_major(features: usize, height: usize, width: usize, cells: &[f32]) -> Result<Self> {
        if cells.len() != features * height * width {
            return Err(Error::dim("cell-major buffer has the wrong length"));
        }
        let mut data = vec![0.0; cells.len()];
        for cell in 0..height * width {
            for f in 0..features {
                data[f * height * width + cell] = cells[cell * features + f];
            }
        }
        Self::new(features, height, width, data)
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, f: usize, y: usize, x: usize) -> f32 {
        self.data[(f * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, f: usize, y: usize, x: usize, value: f32) {
        self.data[(f * self.height + y) * self.width + x] = value;
    }

    /// Feature vector of one cell.
    pub fn cell(&self, y: usize, x: usize) -> Vec<f32> {
        let mut out = vec![0.0; self.features];
        self.cell_into(y, x, &mut out);
        out
    }

    pub fn cell_into(&self, y: usize, x: usize, out: &mut [f32]) {
        let plane = self.height * self.width;
        let offset = y * self.width + x;
        for (f, slot) in out.iter_mut().enumerate().take(self.features) {
            *slot = self.data[f * plane + offset];
        }
    }

    pub fn set_cell(&mut self, y: usize, x: usize, values: &[f32]) {
        let plane = self.height * self.width;
        let offset = y * self.width + x;
        for (f, v) in values.iter().enumerate().take(self.features) {
            self.data[f * plane + offset] = *v;
        }
    }

    /// Row-major `[H * W, F]` copy of the data.
    pub fn to_cell_major(&self) -> Vec<f32> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; self.data.len()];
        for cell in 0..plane {
            for f in 0..self.features {
                out[cell * self.features + f] = self.data[f * plane + cell];
            }
        }
        out
    }
}
