use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::grid::{CellSpan, GridStructure};
use crate::error::CoreError;
use crate::geom::{BBox, PageModel, TextRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellSource {
    TextLayer,
    OcrClient,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellContent {
    pub row: usize,
    pub col: usize,
    pub text: String,
    pub source: CellSource,
    #[serde(default)]
    pub edited: bool,
}

/// Text recognition for cell crops of image-only pages.
pub trait CellOcr {
    fn recognize(&self, page_index: usize, cell: &BBox) -> Result<String, CoreError>;
}

/// The logical cell a run belongs to: among cells containing the run's
/// center (all cells if none does), the one with the largest overlap area,
/// then the topmost-leftmost.
pub fn assign_run(grid: &GridStructure, cells: &[CellSpan], run: &TextRun) -> Option<usize> {
    let center = run.bbox.center();
    let containing: Vec<usize> = (0..cells.len())
        .filter(|&i| grid.cell_rect(&cells[i]).contains_point(center))
        .collect();
    let pool: Vec<usize> = if containing.is_empty() {
        (0..cells.len())
            .filter(|&i| grid.cell_rect(&cells[i]).overlap_area(&run.bbox) > 0.0)
            .collect()
    } else {
        containing
    };
    pool.into_iter().max_by(|&a, &b| {
        let oa = grid.cell_rect(&cells[a]).overlap_area(&run.bbox);
        let ob = grid.cell_rect(&cells[b]).overlap_area(&run.bbox);
        oa.total_cmp(&ob)
            .then((cells[b].r0, cells[b].c0).cmp(&(cells[a].r0, cells[a].c0)))
    })
}

/// One [`CellContent`] per logical cell. Text-layer runs whose center lies in
/// `region` are concatenated per cell in reading order; image-only pages go
/// through `ocr`.
pub fn recognize_content(
    page: &PageModel,
    region: &BBox,
    grid: &GridStructure,
    ocr: Option<&dyn CellOcr>,
) -> Result<Vec<CellContent>, CoreError> {
    let cells = grid.logical_cells();
    if page.is_image_only() {
        let ocr = ocr.ok_or(CoreError::OcrClientUnavailable)?;
        return cells
            .iter()
            .map(|span| {
                Ok(CellContent {
                    row: span.r0,
                    col: span.c0,
                    text: ocr.recognize(page.page_index, &grid.cell_rect(span))?,
                    source: CellSource::OcrClient,
                    edited: false,
                })
            })
            .collect();
    }
    let mut texts: Vec<String> = alloc::vec![String::new(); cells.len()];
    for run in page.runs_in(region) {
        if let Some(i) = assign_run(grid, &cells, run) {
            if !texts[i].is_empty() {
                texts[i].push(' ');
            }
            texts[i].push_str(&run.text);
        }
    }
    Ok(cells
        .iter()
        .zip(texts)
        .map(|(span, text)| CellContent {
            row: span.r0,
            col: span.c0,
            text,
            source: CellSource::TextLayer,
            edited: false,
        })
        .collect())
}
