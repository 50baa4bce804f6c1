//! Staged table extraction: region → structure → content, each stage gated by
//! a human confirmation.

mod content;
mod detect;
mod grid;
mod structure;

pub use content::{assign_run, recognize_content, CellContent, CellOcr, CellSource};
pub use detect::detect_table_regions;
pub use grid::{CellSpan, GridStructure, StructureEdit};
pub use structure::recognize_structure;

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::correction::{to_value, Adjustment, Module};
use crate::error::CoreError;
use crate::geom::BBox;
use crate::time::Timestamp;

/// Tunables for detection and structure recognition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableConfig {
    /// Separators closer than this (pt) collapse into one.
    pub separator_merge: f64,
    /// Whitespace gaps must reach this multiple of the median inter-run gap.
    pub gap_factor: f64,
    /// Smallest whitespace gap (pt) that can separate rows or columns.
    pub min_gap: f64,
    /// A run spans a separator when the part beyond it exceeds this fraction
    /// of the part on its center's side.
    pub merge_cross_ratio: f64,
    /// Minimum rule length as a fraction of page width.
    pub min_rule_fraction: f64,
    /// Band (pt) around figures excluded from text-table detection.
    pub margin_band: f64,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            separator_merge: 3.0,
            gap_factor: 1.5,
            min_gap: 0.5,
            merge_cross_ratio: 0.5,
            min_rule_fraction: 0.4,
            margin_band: 12.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PipelineStage {
    Detected,
    RegionConfirmed,
    StructureProposed,
    StructureConfirmed,
    ContentProposed,
    ContentConfirmed,
}

impl PipelineStage {
    pub const ALL: [PipelineStage; 6] = [
        PipelineStage::Detected,
        PipelineStage::RegionConfirmed,
        PipelineStage::StructureProposed,
        PipelineStage::StructureConfirmed,
        PipelineStage::ContentProposed,
        PipelineStage::ContentConfirmed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PipelineStage::Detected => "Detected",
            PipelineStage::RegionConfirmed => "RegionConfirmed",
            PipelineStage::StructureProposed => "StructureProposed",
            PipelineStage::StructureConfirmed => "StructureConfirmed",
            PipelineStage::ContentProposed => "ContentProposed",
            PipelineStage::ContentConfirmed => "ContentConfirmed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableArtifact {
    pub table_id: String,
    pub doc_id: String,
    pub page_index: usize,
    pub region: BBox,
    pub stage: PipelineStage,
    pub grid: Option<GridStructure>,
    pub cells: Option<Vec<CellContent>>,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
    /// Monotonic sequence stamped at content confirmation; orders conflicting
    /// values at integration.
    #[serde(default)]
    pub confirmation_seq: Option<u64>,
}

impl TableArtifact {
    pub fn detected(table_id: &str, doc_id: &str, page_index: usize, region: BBox, now: Timestamp) -> Self {
        Self {
            table_id: table_id.into(),
            doc_id: doc_id.into(),
            page_index,
            region,
            stage: PipelineStage::Detected,
            grid: None,
            cells: None,
            created_at: now,
            updated_at: now,
            confirmation_seq: None,
        }
    }

    fn invalid(&self, op: &'static str) -> CoreError {
        CoreError::InvalidStage { op, stage: self.stage.name() }
    }

    fn adjustment(&self, before: serde_json::Value, after: serde_json::Value) -> Adjustment {
        Adjustment::new(Module::Table, Some(&self.table_id), self.stage.name(), before, after)
    }

    /// Invariant check: grid iff stage ≥ StructureProposed, cells iff stage ≥
    /// ContentProposed.
    pub fn is_consistent(&self) -> bool {
        self.grid.is_some() == (self.stage >= PipelineStage::StructureProposed)
            && self.cells.is_some() == (self.stage >= PipelineStage::ContentProposed)
            && self.grid.as_ref().is_none_or(|g| g.validate().is_ok())
    }

    /// Accepts the user's table box. Returns an adjustment when it differs
    /// from the proposal. Confirming the same box twice is a no-op.
    pub fn confirm_region(&mut self, region: BBox, page: &BBox, now: Timestamp) -> Result<Option<Adjustment>, CoreError> {
        if self.stage == PipelineStage::RegionConfirmed && region == self.region {
            return Ok(None);
        }
        if self.stage != PipelineStage::Detected {
            return Err(self.invalid("confirm_region"));
        }
        if !region.is_finite() || region.width() <= 0.0 || region.height() <= 0.0 {
            return Err(CoreError::EmptyRegion);
        }
        if !page.contains(&region) {
            return Err(CoreError::RegionOutOfPage);
        }
        let adj = (region != self.region).then(|| self.adjustment(to_value(&self.region), to_value(&region)));
        self.region = region;
        self.stage = PipelineStage::RegionConfirmed;
        self.updated_at = now;
        Ok(adj)
    }

    pub fn propose_structure(&mut self, grid: GridStructure, now: Timestamp) -> Result<(), CoreError> {
        if self.stage != PipelineStage::RegionConfirmed {
            return Err(self.invalid("recognize_structure"));
        }
        grid.validate()?;
        self.grid = Some(grid);
        self.stage = PipelineStage::StructureProposed;
        self.updated_at = now;
        Ok(())
    }

    pub fn edit_structure(&mut self, edit: &StructureEdit, now: Timestamp) -> Result<Adjustment, CoreError> {
        if !matches!(self.stage, PipelineStage::StructureProposed | PipelineStage::StructureConfirmed) {
            return Err(self.invalid("edit_structure"));
        }
        let grid = self.grid.as_ref().expect("grid present from StructureProposed");
        let updated = grid.apply(edit)?;
        let adj = self.adjustment(to_value(edit), to_value(&updated));
        self.grid = Some(updated);
        self.stage = PipelineStage::StructureProposed;
        self.cells = None;
        self.updated_at = now;
        Ok(adj)
    }

    pub fn confirm_structure(&mut self, now: Timestamp) -> Result<(), CoreError> {
        match self.stage {
            PipelineStage::StructureConfirmed => Ok(()),
            PipelineStage::StructureProposed => {
                self.stage = PipelineStage::StructureConfirmed;
                self.updated_at = now;
                Ok(())
            }
            _ => Err(self.invalid("confirm_structure")),
        }
    }

    pub fn propose_content(&mut self, cells: Vec<CellContent>, now: Timestamp) -> Result<(), CoreError> {
        if self.stage != PipelineStage::StructureConfirmed {
            return Err(self.invalid("recognize_content"));
        }
        let grid = self.grid.as_ref().expect("grid present");
        let expected = grid.logical_cells();
        let complete = cells.len() == expected.len()
            && expected.iter().all(|s| cells.iter().filter(|c| c.row == s.r0 && c.col == s.c0).count() == 1);
        if !complete {
            return Err(CoreError::Validation("one cell content per logical cell is required".into()));
        }
        self.cells = Some(cells);
        self.stage = PipelineStage::ContentProposed;
        self.updated_at = now;
        Ok(())
    }

    /// Edits the logical cell covering `(row, col)`.
    pub fn edit_cell(&mut self, row: usize, col: usize, text: &str, now: Timestamp) -> Result<Adjustment, CoreError> {
        if self.stage != PipelineStage::ContentProposed {
            return Err(self.invalid("edit_cell"));
        }
        let span = self
            .grid
            .as_ref()
            .and_then(|g| g.cell_at(row, col))
            .ok_or(CoreError::UnknownCell { row, col })?;
        let table_id = self.table_id.clone();
        let stage = self.stage.name();
        let cell = self
            .cells
            .as_mut()
            .and_then(|cells| cells.iter_mut().find(|c| c.row == span.r0 && c.col == span.c0))
            .ok_or(CoreError::UnknownCell { row, col })?;
        let before = to_value(&cell.text);
        cell.text = text.into();
        cell.edited = true;
        cell.source = CellSource::Manual;
        self.updated_at = now;
        Ok(Adjustment::new(
            Module::Table,
            Some(&table_id),
            stage,
            serde_json::json!({ "row": span.r0, "col": span.c0, "text": before }),
            serde_json::json!({ "row": span.r0, "col": span.c0, "text": text }),
        ))
    }

    pub fn confirm_content(&mut self, seq: u64, now: Timestamp) -> Result<(), CoreError> {
        match self.stage {
            PipelineStage::ContentConfirmed => Ok(()),
            PipelineStage::ContentProposed => {
                self.stage = PipelineStage::ContentConfirmed;
                self.confirmation_seq = Some(seq);
                self.updated_at = now;
                Ok(())
            }
            _ => Err(self.invalid("confirm_content")),
        }
    }

    /// Moves to a strictly earlier stage, dropping everything produced after it.
    pub fn revert(&mut self, target: PipelineStage, now: Timestamp) -> Result<(), CoreError> {
        if target >= self.stage {
            return Err(self.invalid("revert"));
        }
        if target < PipelineStage::StructureProposed {
            self.grid = None;
        }
        if target < PipelineStage::ContentProposed {
            self.cells = None;
        }
        if target < PipelineStage::ContentConfirmed {
            self.confirmation_seq = None;
        }
        self.stage = target;
        self.updated_at = now;
        Ok(())
    }

    /// Cell texts addressed by grid position, with merged cells repeated over
    /// every position they cover. Only meaningful once content exists.
    pub fn value_grid(&self) -> Option<Vec<Vec<String>>> {
        let grid = self.grid.as_ref()?;
        let cells = self.cells.as_ref()?;
        let mut out = alloc::vec![alloc::vec![String::new(); grid.cols()]; grid.rows()];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, slot) in row.iter_mut().enumerate() {
                if let Some(span) = grid.cell_at(r, c) {
                    if let Some(cell) = cells.iter().find(|x| x.row == span.r0 && x.col == span.c0) {
                        slot.clone_from(&cell.text);
                    }
                }
            }
        }
        Some(out)
    }
}
