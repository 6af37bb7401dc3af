use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary mask stored as column-major run lengths.
///
/// `counts` alternates background and foreground runs and always starts with
/// a (possibly empty) background run. The runs sum to `width * height`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawMask")]
pub struct BinaryMask {
    width: usize,
    height: usize,
    counts: Vec<u32>,
}

#[derive(Deserialize)]
struct RawMask {
    width: usize,
    height: usize,
    counts: Vec<u32>,
}

impl TryFrom<RawMask> for BinaryMask {
    type Error = Error;

    fn try_from(raw: RawMask) -> Result<Self> {
        BinaryMask::from_counts(raw.width, raw.height, raw.counts)
    }
}

impl BinaryMask {
    pub fn from_counts(width: usize, height: usize, counts: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::format("mask dims must be positive"));
        }
        let sum: u64 = counts.iter().map(|&c| c as u64).sum();
        if sum != (width * height) as u64 {
            return Err(Error::format(format!(
                "RLE counts sum to {sum}, mask has {} pixels",
                width * height
            )));
        }
        // normalize: drop interior zero runs by merging neighbors
        let mut norm: Vec<u32> = Vec::with_capacity(counts.len());
        for (i, &c) in counts.iter().enumerate() {
            let want_fg = i % 2 == 1;
            let next_is_fg = norm.len() % 2 == 1;
            if c == 0 {
                continue;
            }
            if want_fg == next_is_fg {
                norm.push(c);
            } else if let Some(last) = norm.last_mut() {
                *last += c;
            } else {
                // foreground run first: leading empty background run
                norm.push(0);
                norm.push(c);
            }
        }
        if norm.is_empty() {
            norm.push(0);
        }
        Ok(BinaryMask {
            width,
            height,
            counts: norm,
        })
    }

    /// Encodes a row-major pixel grid (`pixels[y * width + x]`).
    pub fn from_bitmap(width: usize, height: usize, pixels: &[bool]) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::dim("bitmap length does not match mask dims"));
        }
        if width == 0 || height == 0 {
            return Err(Error::format("mask dims must be positive"));
        }
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..width {
            for y in 0..height {
                let v = pixels[y * width + x];
                if v != current {
                    counts.push(run);
                    run = 0;
                    current = v;
                }
                run += 1;
            }
        }
        counts.push(run);
        Ok(BinaryMask { width, height, counts })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let pixels: Vec<bool> = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::from_bitmap(width, height, &pixels).expect("dims are consistent")
    }

    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            counts: vec![(width * height) as u32],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Row-major pixel grid.
    pub fn to_bitmap(&self) -> Vec<bool> {
        let mut out = vec![false; self.width * self.height];
        let mut pos = 0usize;
        for (i, &c) in self.counts.iter().enumerate() {
            if i % 2 == 1 {
                for p in pos..pos + c as usize {
                    let (x, y) = (p / self.height, p % self.height);
                    out[y * self.width + x] = true;
                }
            }
            pos += c as usize;
        }
        out
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn same_canvas(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Foreground pixels shared with `other`, by merging runs.
    pub fn intersection_area(&self, other: &BinaryMask) -> Result<u64> {
        if !self.same_canvas(other) {
            return Err(Error::dim(format!(
                "mask canvases differ: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let (mut i, mut j) = (0usize, 0usize);
        let (mut left_a, mut left_b) = (self.counts[0] as u64, other.counts[0] as u64);
        let mut inter = 0u64;
        loop {
            while left_a == 0 {
                i += 1;
                if i >= self.counts.len() {
                    return Ok(inter);
                }
                left_a = self.counts[i] as u64;
            }
            while left_b == 0 {
                j += 1;
                if j >= other.counts.len() {
                    return Ok(inter);
                }
                left_b = other.counts[j] as u64;
            }
            let step = left_a.min(left_b);
            if i % 2 == 1 && j % 2 == 1 {
                inter += step;
            }
            left_a -= step;
            left_b -= step;
        }
    }

    pub fn iou(&self, other: &BinaryMask) -> Result<f64> {
        let inter = self.intersection_area(other)?;
        let union = self.area() + other.area() - inter;
        Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
    }

    /// Tight `[x0, y0, x1, y1)` bounds of the foreground, if any.
    pub fn bounds(&self) -> Option<[usize; 4]> {
        let mut b: Option<[usize; 4]> = None;
        let mut pos = 0usize;
        for (i, &c) in self.counts.iter().enumerate() {
            if i % 2 == 1 && c > 0 {
                for p in [pos, pos + c as usize - 1] {
                    let (x, y) = (p / self.height, p % self.height);
                    let e = b.get_or_insert([x, y, x + 1, y + 1]);
                    e[0] = e[0].min(x);
                    e[2] = e[2].max(x + 1);
                }
                // a run spanning columns covers every row in between
                let first_col = pos / self.height;
                let last_col = (pos + c as usize - 1) / self.height;
                let e = b.as_mut().expect("set above");
                if last_col > first_col {
                    e[1] = 0;
                    e[3] = self.height;
                } else {
                    e[1] = e[1].min(pos % self.height);
                    e[3] = e[3].max((pos + c as usize - 1) % self.height + 1);
                }
            }
            pos += c as usize;
        }
        b
    }

    pub fn map_pixels(&self, other: &BinaryMask, op: impl Fn(bool, bool) -> bool) -> Result<Self> {
        if !self.same_canvas(other) {
            return Err(Error::dim("mask canvases differ"));
        }
        let a = self.to_bitmap();
        let b = other.to_bitmap();
        let out: Vec<bool> = a.iter().zip(&b).map(|(&p, &q)| op(p, q)).collect();
        BinaryMask::from_bitmap(self.width, self.height, &out)
    }
}

/// Run-length encodes a row-major bitmap.
pub fn rle_encode(width: usize, height: usize, pixels: &[bool]) -> Result<BinaryMask> {
    BinaryMask::from_bitmap(width, height, pixels)
}

/// Decodes run lengths into a row-major bitmap.
pub fn rle_decode(width: usize, height: usize, counts: &[u32]) -> Result<Vec<bool>> {
    Ok(BinaryMask::from_counts(width, height, counts.to_vec())?.to_bitmap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_full_masks() {
        assert_eq!(BinaryMask::from_bitmap(2, 3, &[false; 6]).unwrap().counts(), &[6]);
        assert_eq!(BinaryMask::from_bitmap(2, 3, &[true; 6]).unwrap().counts(), &[0, 6]);
    }

    #[test]
    fn column_major_runs() {
        // 2 wide, 2 high; right column set
        let m = BinaryMask::from_bitmap(2, 2, &[false, true, false, true]).unwrap();
        assert_eq!(m.counts(), &[2, 2]);
        let m = BinaryMask::from_bitmap(2, 2, &[true, false, false, false]).unwrap();
        assert_eq!(m.counts(), &[0, 1, 3]);
    }

    #[test]
    fn bad_count_sum_is_rejected() {
        assert!(rle_decode(2, 2, &[1, 2]).is_err());
        assert!(serde_json::from_str::<BinaryMask>(r#"{"width":2,"height":2,"counts":[3]}"#).is_err());
    }

    #[test]
    fn zero_runs_are_normalized() {
        let m = BinaryMask::from_counts(3, 1, vec![1, 0, 1, 1]).unwrap();
        assert_eq!(m.counts(), &[2, 1]);
        assert_eq!(m.to_bitmap(), vec![false, false, true]);
    }

    #[test]
    fn bounds_of_a_block() {
        let m = BinaryMask::from_fn(6, 5, |x, y| (2..4).contains(&x) && (1..3).contains(&y));
        assert_eq!(m.bounds(), Some([2, 1, 4, 3]));
        assert_eq!(BinaryMask::empty(3, 3).bounds(), None);
        let tall = BinaryMask::from_fn(3, 3, |x, y| x == 1 || (x == 2 && y == 0));
        assert_eq!(tall.bounds(), Some([1, 0, 3, 3]));
    }

    #[test]
    fn canvas_mismatch_is_an_error() {
        assert!(BinaryMask::empty(2, 2).iou(&BinaryMask::empty(2, 3)).is_err());
    }
}
