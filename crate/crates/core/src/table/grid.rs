use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::geom::BBox;

/// Inclusive rectangular block of grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellSpan {
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

impl CellSpan {
    pub const fn new(r0: usize, c0: usize, r1: usize, c1: usize) -> Self {
        Self { r0, c0, r1, c1 }
    }

    pub const fn single(r: usize, c: usize) -> Self {
        Self::new(r, c, r, c)
    }

    pub fn is_single(&self) -> bool {
        self.r0 == self.r1 && self.c0 == self.c1
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        (self.r0..=self.r1).contains(&r) && (self.c0..=self.c1).contains(&c)
    }

    pub fn overlaps(&self, o: &CellSpan) -> bool {
        self.r0 <= o.r1 && o.r0 <= self.r1 && self.c0 <= o.c1 && o.c0 <= self.c1
    }

    fn hull(&self, o: &CellSpan) -> CellSpan {
        CellSpan::new(
            self.r0.min(o.r0),
            self.c0.min(o.c0),
            self.r1.max(o.r1),
            self.c1.max(o.c1),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StructureEdit {
    AddRow { y: f64 },
    AddCol { x: f64 },
    DeleteRow { index: usize },
    DeleteCol { index: usize },
    Merge { span: CellSpan },
    Split { row: usize, col: usize },
}

/// Rectilinear cell grid with optional merged blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStructure {
    pub row_bounds: Vec<f64>,
    pub col_bounds: Vec<f64>,
    #[serde(default)]
    pub merges: Vec<CellSpan>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] < w[1])
}

impl GridStructure {
    /// Single cell covering `region`.
    pub fn single(region: &BBox) -> Self {
        Self {
            row_bounds: alloc::vec![region.y0, region.y1],
            col_bounds: alloc::vec![region.x0, region.x1],
            merges: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.row_bounds.len().saturating_sub(1)
    }

    pub fn cols(&self) -> usize {
        self.col_bounds.len().saturating_sub(1)
    }

    pub fn extent(&self) -> BBox {
        BBox::new(
            self.col_bounds[0],
            self.row_bounds[0],
            *self.col_bounds.last().unwrap_or(&0.0),
            *self.row_bounds.last().unwrap_or(&0.0),
        )
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.row_bounds.len() < 2 || self.col_bounds.len() < 2 {
            return Err(CoreError::InvalidEdit("grid needs at least one row and one column".into()));
        }
        if !strictly_increasing(&self.row_bounds) || !strictly_increasing(&self.col_bounds) {
            return Err(CoreError::InvalidEdit("bounds must be strictly increasing".into()));
        }
        for (i, m) in self.merges.iter().enumerate() {
            if m.r0 > m.r1 || m.c0 > m.c1 || m.r1 >= self.rows() || m.c1 >= self.cols() {
                return Err(CoreError::InvalidEdit(format!("merge {m:?} outside the grid")));
            }
            if m.is_single() {
                return Err(CoreError::InvalidEdit(format!("merge {m:?} covers one cell")));
            }
            if self.merges[..i].iter().any(|o| o.overlaps(m)) {
                return Err(CoreError::InvalidEdit(format!("merge {m:?} overlaps another merge")));
            }
        }
        Ok(())
    }

    /// The logical cell covering grid position `(r, c)`.
    pub fn cell_at(&self, r: usize, c: usize) -> Option<CellSpan> {
        if r >= self.rows() || c >= self.cols() {
            return None;
        }
        Some(
            self.merges
                .iter()
                .copied()
                .find(|m| m.contains(r, c))
                .unwrap_or(CellSpan::single(r, c)),
        )
    }

    /// All logical cells in row-major order of their top-left corner.
    pub fn logical_cells(&self) -> Vec<CellSpan> {
        let mut out = Vec::new();
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                if let Some(span) = self.cell_at(r, c) {
                    if span.r0 == r && span.c0 == c {
                        out.push(span);
                    }
                }
            }
        }
        out
    }

    pub fn cell_rect(&self, span: &CellSpan) -> BBox {
        BBox::new(
            self.col_bounds[span.c0],
            self.row_bounds[span.r0],
            self.col_bounds[span.c1 + 1],
            self.row_bounds[span.r1 + 1],
        )
    }

    /// Replaces overlapping merges by their hull until none overlap, and drops
    /// single-cell merges.
    pub(crate) fn normalize_merges(&mut self) {
        let mut merges: Vec<CellSpan> = self.merges.drain(..).collect();
        loop {
            let mut changed = false;
            'outer: for i in 0..merges.len() {
                for j in i + 1..merges.len() {
                    if merges[i].overlaps(&merges[j]) {
                        let hull = merges[i].hull(&merges[j]);
                        merges.remove(j);
                        merges[i] = hull;
                        changed = true;
                        break 'outer;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        merges.retain(|m| !m.is_single());
        merges.sort();
        self.merges = merges;
    }

    pub fn apply(&self, edit: &StructureEdit) -> Result<GridStructure, CoreError> {
        let mut g = self.clone();
        match *edit {
            StructureEdit::AddRow { y } => {
                let i = insert_bound(&mut g.row_bounds, y)?;
                shift_for_insert(&mut g.merges, i, true);
            }
            StructureEdit::AddCol { x } => {
                let i = insert_bound(&mut g.col_bounds, x)?;
                shift_for_insert(&mut g.merges, i, false);
            }
            StructureEdit::DeleteRow { index } => {
                let i = remove_bound(&mut g.row_bounds, index)?;
                shift_for_delete(&mut g.merges, i, true);
                g.normalize_merges();
            }
            StructureEdit::DeleteCol { index } => {
                let i = remove_bound(&mut g.col_bounds, index)?;
                shift_for_delete(&mut g.merges, i, false);
                g.normalize_merges();
            }
            StructureEdit::Merge { span } => {
                if span.r0 > span.r1 || span.c0 > span.c1 || span.r1 >= g.rows() || span.c1 >= g.cols() {
                    return Err(CoreError::InvalidEdit(format!("merge {span:?} outside the grid")));
                }
                if span.is_single() {
                    return Err(CoreError::InvalidEdit("merge must cover at least two cells".into()));
                }
                if g.merges.iter().any(|m| m.overlaps(&span)) {
                    return Err(CoreError::InvalidEdit(format!("merge {span:?} overlaps an existing merge")));
                }
                g.merges.push(span);
                g.merges.sort();
            }
            StructureEdit::Split { row, col } => {
                let pos = g
                    .merges
                    .iter()
                    .position(|m| m.contains(row, col))
                    .ok_or_else(|| CoreError::InvalidEdit(format!("no merged cell at ({row}, {col})")))?;
                g.merges.remove(pos);
            }
        }
        g.validate()?;
        Ok(g)
    }
}

/// Inserts `v` strictly between the outer bounds; returns the index of the
/// row/column that was split.
fn insert_bound(bounds: &mut Vec<f64>, v: f64) -> Result<usize, CoreError> {
    let first = bounds[0];
    let last = *bounds.last().expect("validated grid");
    if !(v.is_finite() && v > first && v < last) || bounds.contains(&v) {
        return Err(CoreError::InvalidEdit(format!("bound {v} is not strictly between neighbours")));
    }
    let pos = bounds.partition_point(|b| *b < v);
    bounds.insert(pos, v);
    Ok(pos - 1)
}

/// Removes the separator below `index` (or above it for the last one);
/// returns the index of the surviving row/column that absorbed the other.
fn remove_bound(bounds: &mut Vec<f64>, index: usize) -> Result<usize, CoreError> {
    let n = bounds.len() - 1;
    if index >= n {
        return Err(CoreError::InvalidEdit(format!("index {index} out of range")));
    }
    if n < 2 {
        return Err(CoreError::InvalidEdit("cannot delete the only row or column".into()));
    }
    if index + 1 < n {
        bounds.remove(index + 1);
        Ok(index)
    } else {
        bounds.remove(index);
        Ok(index - 1)
    }
}

fn shift_for_insert(merges: &mut [CellSpan], split: usize, rows: bool) {
    for m in merges {
        let (lo, hi) = if rows { (&mut m.r0, &mut m.r1) } else { (&mut m.c0, &mut m.c1) };
        if *lo > split {
            *lo += 1;
        }
        if *hi >= split {
            *hi += 1;
        }
    }
}

fn shift_for_delete(merges: &mut [CellSpan], kept: usize, rows: bool) {
    for m in merges {
        let (lo, hi) = if rows { (&mut m.r0, &mut m.r1) } else { (&mut m.c0, &mut m.c1) };
        if *lo > kept {
            *lo -= 1;
        }
        if *hi > kept {
            *hi -= 1;
        }
    }
}
