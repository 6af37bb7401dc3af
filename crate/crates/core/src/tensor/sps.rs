use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{CellCoord, DenseTensor, FeatureTransform};
use crate::error::{Error, Result};

/// Structure-preserving sparse feature grid.
///
/// Indices `0..N_A` in the index map address `active` rows and each appears
/// exactly once; indices `N_A..N_A+N_P` address `passive` rows and each
/// appears at least once.
#[derive(Debug, Clone, PartialEq)]
pub struct SpsTensor {
    features: usize,
    height: usize,
    width: usize,
    active: Vec<f32>,
    passive: Vec<f32>,
    index_map: Vec<u32>,
}

impl SpsTensor {
    /// Assembles a tensor from raw parts and checks every invariant.
    pub fn from_parts(
        features: usize,
        height: usize,
        width: usize,
        active: Vec<f32>,
        passive: Vec<f32>,
        index_map: Vec<u32>,
    ) -> Result<Self> {
        if features == 0 {
            return Err(Error::dim("feature size must be positive"));
        }
        if !active.len().is_multiple_of(features) || !passive.len().is_multiple_of(features) {
            return Err(Error::dim("feature matrices are not a multiple of F"));
        }
        if index_map.len() != height * width {
            return Err(Error::dim(format!(
                "index map has {} entries for a {height}x{width} grid",
                index_map.len()
            )));
        }
        let t = SpsTensor {
            features,
            height,
            width,
            active,
            passive,
            index_map,
        };
        t.validate()?;
        Ok(t)
    }

    /// Splits a dense grid into active rows (the given cells, in row-major
    /// order) and one passive row per remaining cell.
    pub fn from_dense(dense: &DenseTensor, active_cells: &[CellCoord]) -> Result<Self> {
        let (h, w, f) = (dense.height(), dense.width(), dense.features());
        let selected = selection_mask(h, w, active_cells)?;
        let n_active = selected.iter().filter(|&&s| s).count();

        let mut active = Vec::with_capacity(n_active * f);
        let mut passive = Vec::with_capacity((h * w - n_active) * f);
        let mut index_map = vec![0u32; h * w];
        let mut next_passive = n_active as u32;
        let mut next_active = 0u32;
        let mut buf = vec![0.0; f];
        for y in 0..h {
            for x in 0..w {
                let cell = y * w + x;
                dense.cell_into(y, x, &mut buf);
                if selected[cell] {
                    index_map[cell] = next_active;
                    next_active += 1;
                    active.extend_from_slice(&buf);
                } else {
                    index_map[cell] = next_passive;
                    next_passive += 1;
                    passive.extend_from_slice(&buf);
                }
            }
        }
        Ok(SpsTensor {
            features: f,
            height: h,
            width: w,
            active,
            passive,
            index_map,
        })
    }

    pub fn to_dense(&self) -> DenseTensor {
        let plane = self.height * self.width;
        let mut data = vec![0.0; self.features * plane];
        for (cell, &idx) in self.index_map.iter().enumerate() {
            let row = self.row(idx as usize);
            for (f, v) in row.iter().enumerate() {
                data[f * plane + cell] = *v;
            }
        }
        DenseTensor::new(self.features, self.height, self.width, data)
            .expect("valid sps tensor converts to a valid dense tensor")
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

    pub fn num_active(&self) -> usize {
        self.active.len() / self.features
    }

    pub fn num_passive(&self) -> usize {
        self.passive.len() / self.features
    }

    pub fn active(&self) -> &[f32] {
        &self.active
    }

    pub fn passive(&self) -> &[f32] {
        &self.passive
    }

    pub fn index_map(&self) -> &[u32] {
        &self.index_map
    }

    pub fn index_at(&self, y: usize, x: usize) -> u32 {
        self.index_map[y * self.width + x]
    }

    /// Feature row by global index (active rows first, then passive).
    pub fn row(&self, idx: usize) -> &[f32] {
        let n_active = self.num_active();
        let f = self.features;
        if idx < n_active {
            &self.active[idx * f..(idx + 1) * f]
        } else {
            let p = idx - n_active;
            &self.passive[p * f..(p + 1) * f]
        }
    }

    pub fn feature_at(&self, y: usize, x: usize) -> &[f32] {
        self.row(self.index_at(y, x) as usize)
    }

    /// Feature at a possibly out-of-grid location; `None` means padding.
    pub fn feature_at_signed(&self, y: isize, x: isize) -> Option<&[f32]> {
        if y < 0 || x < 0 || y as usize >= self.height || x as usize >= self.width {
            None
        } else {
            Some(self.feature_at(y as usize, x as usize))
        }
    }

    /// Grid cell of every active row, in row order.
    pub fn active_cells(&self) -> Vec<CellCoord> {
        let mut cells = vec![CellCoord::new(0, 0); self.num_active()];
        let n_active = self.num_active() as u32;
        for (cell, &idx) in self.index_map.iter().enumerate() {
            if idx < n_active {
                cells[idx as usize] = CellCoord::new(cell / self.width, cell % self.width);
            }
        }
        cells
    }

    pub fn is_active(&self, y: usize, x: usize) -> bool {
        (self.index_at(y, x) as usize) < self.num_active()
    }

    /// Gathers the features at `cell + offset` for each offset, zero-padded
    /// outside the grid. Returns a row-major `|offsets| x F` matrix.
    pub fn gather_neighborhood(&self, cell: CellCoord, offsets: &[(isize, isize)]) -> Result<Vec<f32>> {
        self.check_cell(cell)?;
        if !self.is_active(cell.y, cell.x) {
            return Err(Error::contract(format!("cell ({}, {}) is not active", cell.y, cell.x)));
        }
        let f = self.features;
        let mut out = vec![0.0; offsets.len() * f];
        for (i, &(dy, dx)) in offsets.iter().enumerate() {
            if let Some(row) = self.feature_at_signed(cell.y as isize + dy, cell.x as isize + dx) {
                out[i * f..(i + 1) * f].copy_from_slice(row);
            }
        }
        Ok(out)
    }

    /// Doubles the grid resolution. Each active cell becomes four active
    /// children computed by `child_maps[2 * dy + dx]`; passive cells copy
    /// their parent's index to all four children and keep their rows.
    pub fn subdivide<T: FeatureTransform>(&self, child_maps: &[T]) -> Result<SpsTensor> {
        if child_maps.len() != 4 {
            return Err(Error::dim(format!(
                "subdivision needs 4 child transforms, got {}",
                child_maps.len()
            )));
        }
        let f = self.features;
        for (j, m) in child_maps.iter().enumerate() {
            if m.in_dim() != f || m.out_dim() != f {
                return Err(Error::dim(format!(
                    "child transform {j} maps {} -> {}, expected {f} -> {f}",
                    m.in_dim(),
                    m.out_dim()
                )));
            }
        }
        let n_active = self.num_active();
        let mut active = vec![0.0; 4 * n_active * f];
        active.par_chunks_mut(4 * f).enumerate().for_each(|(parent, children)| {
            let src = &self.active[parent * f..(parent + 1) * f];
            for (j, child) in children.chunks_mut(f).enumerate() {
                child_maps[j].apply(src, child);
            }
        });

        let (h2, w2) = (2 * self.height, 2 * self.width);
        let mut index_map = vec![0u32; h2 * w2];
        let na = n_active as u32;
        for y in 0..self.height {
            for x in 0..self.width {
                let idx = self.index_at(y, x);
                for dy in 0..2 {
                    for dx in 0..2 {
                        let child = if idx < na {
                            4 * idx + (2 * dy + dx) as u32
                        } else {
                            idx - na + 4 * na
                        };
                        index_map[(2 * y + dy) * w2 + 2 * x + dx] = child;
                    }
                }
            }
        }
        Ok(SpsTensor {
            features: f,
            height: h2,
            width: w2,
            active,
            passive: self.passive.clone(),
            index_map,
        })
    }

    /// Re-splits the grid so that exactly `cells` are active. Features of the
    /// selected cells are copied into new active rows (row-major order); every
    /// other still-referenced row becomes passive, ordered by its old index.
    pub fn reselect(&self, cells: &[CellCoord]) -> Result<SpsTensor> {
        let (h, w, f) = (self.height, self.width, self.features);
        let selected = selection_mask(h, w, cells)?;
        let n_active = selected.iter().filter(|&&s| s).count();

        let mut remap: BTreeMap<u32, u32> = BTreeMap::new();
        for (cell, &idx) in self.index_map.iter().enumerate() {
            if !selected[cell] {
                remap.insert(idx, 0);
            }
        }
        let mut passive = Vec::with_capacity(remap.len() * f);
        for (rank, (old, new)) in remap.iter_mut().enumerate() {
            *new = (n_active + rank) as u32;
            passive.extend_from_slice(self.row(*old as usize));
        }

        let mut active = Vec::with_capacity(n_active * f);
        let mut index_map = vec![0u32; h * w];
        let mut next_active = 0u32;
        for (cell, &old) in self.index_map.iter().enumerate() {
            if selected[cell] {
                index_map[cell] = next_active;
                next_active += 1;
                active.extend_from_slice(self.row(old as usize));
            } else {
                index_map[cell] = remap[&old];
            }
        }
        Ok(SpsTensor {
            features: f,
            height: h,
            width: w,
            active,
            passive,
            index_map,
        })
    }

    /// Returns a copy with the active rows replaced. The new rows may have a
    /// different width only if the tensor has no passive rows.
    pub fn with_active(&self, features: usize, active: Vec<f32>) -> Result<SpsTensor> {
        if active.len() != self.num_active() * features {
            return Err(Error::dim("replacement active matrix has the wrong shape"));
        }
        if features != self.features && self.num_passive() > 0 {
            return Err(Error::dim(
                "changing the feature size of active rows requires a fully active tensor",
            ));
        }
        Ok(SpsTensor {
            features,
            height: self.height,
            width: self.width,
            active,
            passive: self.passive.clone(),
            index_map: self.index_map.clone(),
        })
    }

    /// Returns a copy with both feature matrices replaced.
    pub fn with_rows(&self, features: usize, active: Vec<f32>, passive: Vec<f32>) -> Result<Self> {
        if features == 0
            || active.len() != self.num_active() * features
            || passive.len() != self.num_passive() * features
        {
            return Err(Error::dim("replacement feature matrices have the wrong shape"));
        }
        Ok(SpsTensor {
            features,
            height: self.height,
            width: self.width,
            active,
            passive,
            index_map: self.index_map.clone(),
        })
    }

    /// Full-scan check of the index-map multiplicity invariant.
    pub fn validate(&self) -> Result<()> {
        let n_active = self.num_active();
        let total = n_active + self.num_passive();
        if self.height * self.width > 0 && total == 0 {
            return Err(Error::contract("non-empty grid without feature rows"));
        }
        if self.active.iter().chain(&self.passive).any(|v| !v.is_finite()) {
            return Err(Error::contract("feature rows must be finite"));
        }
        let mut seen = vec![0u32; total];
        for &idx in &self.index_map {
            let idx = idx as usize;
            if idx >= total {
                return Err(Error::contract(format!(
                    "index {idx} out of range for {total} feature rows"
                )));
            }
            seen[idx] += 1;
        }
        if let Some(i) = (0..n_active).find(|&i| seen[i] != 1) {
            return Err(Error::contract(format!("active index {i} appears {} times", seen[i])));
        }
        if let Some(i) = (n_active..total).find(|&i| seen[i] == 0) {
            return Err(Error::contract(format!("passive index {i} is unreferenced")));
        }
        Ok(())
    }

    fn check_cell(&self, cell: CellCoord) -> Result<()> {
        if cell.y >= self.height || cell.x >= self.width {
            return Err(Error::Bounds {
                y: cell.y,
                x: cell.x,
                height: self.height,
                width: self.width,
            });
        }
        Ok(())
    }
}

fn selection_mask(height: usize, width: usize, cells: &[CellCoord]) -> Result<Vec<bool>> {
    let mut selected = vec![false; height * width];
    for c in cells {
        if c.y >= height || c.x >= width {
            return Err(Error::Bounds {
                y: c.y,
                x: c.x,
                height,
                width,
            });
        }
        selected[c.linear(width)] = true;
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Identity;

    fn ramp(f: usize, h: usize, w: usize) -> DenseTensor {
        let data = (0..f * h * w).map(|i| i as f32 * 0.5 - 3.0).collect();
        DenseTensor::new(f, h, w, data).unwrap()
    }

    fn all_cells(h: usize, w: usize) -> Vec<CellCoord> {
        (0..h).flat_map(|y| (0..w).map(move |x| CellCoord::new(y, x))).collect()
    }

    #[test]
    fn fully_active_grid_is_a_permutation() {
        let s = SpsTensor::from_dense(&ramp(2, 3, 3), &all_cells(3, 3)).unwrap();
        assert_eq!((s.num_active(), s.num_passive()), (9, 0));
        let mut idx = s.index_map().to_vec();
        idx.sort_unstable();
        assert_eq!(idx, (0..9).collect::<Vec<u32>>());
    }

    #[test]
    fn fully_passive_grid() {
        let d = ramp(2, 3, 3);
        let s = SpsTensor::from_dense(&d, &[]).unwrap();
        assert_eq!((s.num_active(), s.num_passive()), (0, 9));
        assert_eq!(s.to_dense(), d);
    }

    #[test]
    fn four_active_five_passive() {
        let cells = [(0, 1), (1, 0), (1, 1), (2, 2)].map(|(y, x)| CellCoord::new(y, x));
        let s = SpsTensor::from_dense(&ramp(3, 3, 3), &cells).unwrap();
        assert_eq!((s.num_active(), s.num_passive()), (4, 5));
        s.validate().unwrap();
        for i in 0..4u32 {
            assert_eq!(s.index_map().iter().filter(|&&v| v == i).count(), 1);
        }
        for i in 4..9u32 {
            assert!(s.index_map().contains(&i));
        }
        assert_eq!(s.active_cells(), cells.to_vec());
    }

    #[test]
    fn out_of_range_cell_is_rejected() {
        let err = SpsTensor::from_dense(&ramp(1, 3, 3), &[CellCoord::new(3, 0)]).unwrap_err();
        assert!(matches!(err, Error::Bounds { .. }));
    }

    #[test]
    fn duplicated_passive_row_shows_up_everywhere() {
        let s = SpsTensor::from_parts(2, 1, 3, vec![1.0, 2.0], vec![7.0, 8.0], vec![1, 0, 1]).unwrap();
        let d = s.to_dense();
        assert_eq!(d.cell(0, 0), vec![7.0, 8.0]);
        assert_eq!(d.cell(0, 2), vec![7.0, 8.0]);
        assert_eq!(d.cell(0, 1), vec![1.0, 2.0]);
    }

    #[test]
    fn invalid_index_maps_are_rejected() {
        // active index twice
        assert!(SpsTensor::from_parts(1, 1, 2, vec![1.0], vec![], vec![0, 0]).is_err());
        // unreferenced passive row
        assert!(SpsTensor::from_parts(1, 1, 1, vec![1.0], vec![2.0], vec![0]).is_err());
        // out-of-range index
        assert!(SpsTensor::from_parts(1, 1, 1, vec![1.0], vec![], vec![3]).is_err());
    }

    #[test]
    fn corner_gather_pads_with_zeros() {
        let d = ramp(2, 3, 3);
        let s = SpsTensor::from_dense(&d, &all_cells(3, 3)).unwrap();
        let offsets: Vec<(isize, isize)> = (-1..=1).flat_map(|dy| (-1..=1).map(move |dx| (dy, dx))).collect();
        let g = s.gather_neighborhood(CellCoord::new(0, 0), &offsets).unwrap();
        let zero_rows = g.chunks(2).filter(|r| r.iter().all(|v| *v == 0.0)).count();
        // five of the nine taps fall outside the grid; none of the in-grid
        // features is zero for this ramp
        assert_eq!(zero_rows, 5);

        let center = s.gather_neighborhood(CellCoord::new(1, 1), &offsets).unwrap();
        let mut rows: Vec<Vec<u32>> = center
            .chunks(2)
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), 9);
    }

    #[test]
    fn gather_from_passive_cell_is_a_contract_error() {
        let s = SpsTensor::from_dense(&ramp(1, 2, 2), &[CellCoord::new(0, 0)]).unwrap();
        let err = s.gather_neighborhood(CellCoord::new(1, 1), &[(0, 0)]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn subdivide_one_active_one_passive() {
        let d = DenseTensor::new(1, 1, 2, vec![3.0, 9.0]).unwrap();
        let s = SpsTensor::from_dense(&d, &[CellCoord::new(0, 0)]).unwrap();
        let sub = s.subdivide(&[Identity(1); 4]).unwrap();
        assert_eq!((sub.height(), sub.width()), (2, 4));
        assert_eq!((sub.num_active(), sub.num_passive()), (4, 1));
        assert_eq!(sub.index_map().iter().filter(|&&i| i == 4).count(), 4);
        assert_eq!(sub.index_map(), &[0, 1, 4, 4, 2, 3, 4, 4]);
        sub.validate().unwrap();
    }

    #[test]
    fn subdivide_rejects_wrong_arity() {
        let s = SpsTensor::from_dense(&ramp(2, 2, 2), &all_cells(2, 2)).unwrap();
        assert!(s.subdivide(&[Identity(2); 3]).is_err());
        assert!(s.subdivide(&[Identity(3); 4]).is_err());
    }

    #[test]
    fn reselect_keeps_values_and_invariants() {
        let d = ramp(2, 4, 4);
        let s = SpsTensor::from_dense(&d, &[CellCoord::new(1, 1)]).unwrap();
        let sub = s.subdivide(&[Identity(2); 4]).unwrap();
        let picked = [CellCoord::new(0, 0), CellCoord::new(2, 3), CellCoord::new(7, 7)];
        let r = sub.reselect(&picked).unwrap();
        r.validate().unwrap();
        assert_eq!(r.num_active(), 3);
        assert_eq!(r.to_dense(), sub.to_dense());
        assert_eq!(r.active_cells(), picked.to_vec());
    }

    #[test]
    fn zero_active_tensor_survives_every_operation() {
        let d = ramp(2, 2, 2);
        let s = SpsTensor::from_dense(&d, &[]).unwrap();
        let sub = s.subdivide(&[Identity(2); 4]).unwrap();
        assert_eq!(sub.num_active(), 0);
        assert_eq!(sub.num_passive(), 4);
        sub.validate().unwrap();
    }
}
