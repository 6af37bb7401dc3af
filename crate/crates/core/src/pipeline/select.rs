use crate::tensor::CellCoord;

/// Refinement scores of one RoI's candidate cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateScores {
    pub cells: Vec<CellCoord>,
    pub scores: Vec<f32>,
}

/// Picks the `top_n` highest-scoring cells across all RoIs of an image,
/// breaking ties by RoI index and then row-major cell position. Returns the
/// chosen cells per RoI in row-major order.
pub fn select_active(rois: &[CandidateScores], top_n: usize) -> Vec<Vec<CellCoord>> {
    let mut all: Vec<(f32, usize, CellCoord)> = rois
        .iter()
        .enumerate()
        .flat_map(|(r, c)| {
            debug_assert_eq!(c.cells.len(), c.scores.len());
            c.scores.iter().zip(&c.cells).map(move |(&s, &cell)| (s, r, cell))
        })
        .collect();
    all.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then((a.2.y, a.2.x).cmp(&(b.2.y, b.2.x)))
    });
    all.truncate(top_n);
    let mut out = vec![Vec::new(); rois.len()];
    for (_, r, cell) in all {
        out[r].push(cell);
    }
    for cells in &mut out {
        cells.sort_by_key(|c| (c.y, c.x));
    }
    out
}
