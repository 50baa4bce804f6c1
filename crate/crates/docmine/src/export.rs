//! CSV and XLSX export of integrated datasets, the matching importers, and
//! header configurations read from uploaded spreadsheets.
//!
//! Every cell is written as text, so an export followed by an import gives
//! back the exact value grid, including empty cells.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::str::FromStr;

use calamine::{open_workbook_auto_from_rs, open_workbook_from_rs, Data, Reader, Xlsx};
use docmine_core::integrate::{DocumentDataset, HeaderConfig, ProjectDataset, REFERENCE_ID};
use docmine_core::meta::MetaRecord;
use docmine_core::CoreError;
use rust_xlsxwriter::{Format, Workbook};

pub const VALUES_SHEET: &str = "Data";
pub const REFERENCES_SHEET: &str = "References";
pub const REFERENCE_COLUMNS: [&str; 6] = [REFERENCE_ID, "Title", "Authors", "Venue", "Year", "DOI"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExportError {
    #[error("unparseable file: {0}")]
    UnparseableFile(String),
    #[error("the first row of the spreadsheet is empty")]
    EmptyHeaderRow,
    #[error("cannot write workbook: {0}")]
    Write(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Xlsx,
}

impl ExportFormat {
    pub fn media_type(self) -> &'static str {
        match self {
            Self::Csv => "text/csv; charset=utf-8",
            Self::Xlsx => "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Xlsx => "xlsx",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "xlsx" => Ok(Self::Xlsx),
            other => Err(format!("unknown export format `{other}`")),
        }
    }
}

/// RFC 4180 style CSV with `\n` line endings. Fields are quoted only when
/// they contain a comma, a quote or a line break.
pub fn grid_to_csv(grid: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in grid {
        w.write_record(row).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

pub fn csv_to_grid(bytes: &[u8]) -> Result<Vec<Vec<String>>, ExportError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(bytes);
    let mut grid = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| ExportError::UnparseableFile(e.to_string()))?;
        grid.push(rec.iter().map(str::to_string).collect());
    }
    Ok(grid)
}

fn xlsx_error(e: rust_xlsxwriter::XlsxError) -> ExportError {
    ExportError::Write(e.to_string())
}

/// Workbook with the grid on the first sheet and, when given, a references
/// sheet mapping Reference ID to citation fields.
pub fn grid_to_xlsx(grid: &[Vec<String>], references: Option<&BTreeMap<u32, MetaRecord>>) -> Result<Vec<u8>, ExportError> {
    let mut wb = Workbook::new();
    let text = Format::new().set_num_format("@");
    let sheet = wb.add_worksheet();
    sheet.set_name(VALUES_SHEET).map_err(xlsx_error)?;
    for (r, row) in grid.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if v.is_empty() {
                sheet.write_blank(r as u32, c as u16, &text).map_err(xlsx_error)?;
            } else {
                sheet.write_string(r as u32, c as u16, v).map_err(xlsx_error)?;
            }
        }
    }
    if let Some(refs) = references {
        let sheet = wb.add_worksheet();
        sheet.set_name(REFERENCES_SHEET).map_err(xlsx_error)?;
        for (c, name) in REFERENCE_COLUMNS.iter().enumerate() {
            sheet.write_string(0, c as u16, *name).map_err(xlsx_error)?;
        }
        for (i, (id, m)) in refs.iter().enumerate() {
            let r = i as u32 + 1;
            let values = [
                id.to_string(),
                m.title.clone(),
                m.authors.join("; "),
                m.venue.clone(),
                m.year.map(|y| y.to_string()).unwrap_or_default(),
                m.doi.clone().unwrap_or_default(),
            ];
            for (c, v) in values.iter().enumerate() {
                sheet.write_string(r, c as u16, v).map_err(xlsx_error)?;
            }
        }
    }
    wb.save_to_buffer().map_err(xlsx_error)
}

fn cell_text(d: &Data) -> String {
    match d {
        Data::Empty => String::new(),
        Data::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Cells up to `extent`, with the grid anchored at A1 (calamine ranges
/// start at the first used cell).
fn sheet_grid(range: &calamine::Range<Data>, extent: Option<(u32, u32)>) -> Vec<Vec<String>> {
    let end = match (range.end(), extent) {
        (Some(a), Some(b)) => (a.0.max(b.0), a.1.max(b.1)),
        (a, b) => match a.or(b) {
            Some(e) => e,
            None => return Vec::new(),
        },
    };
    (0..=end.0)
        .map(|r| (0..=end.1).map(|c| range.get_value((r, c)).map(cell_text).unwrap_or_default()).collect())
        .collect()
}

fn unparseable(e: impl std::fmt::Display) -> ExportError {
    ExportError::UnparseableFile(e.to_string())
}

/// Reads one sheet of an XLSX workbook, honouring its declared dimension so
/// trailing blank rows and columns survive.
fn open_xlsx_sheet(bytes: &[u8], name: Option<&str>) -> Result<Vec<Vec<String>>, ExportError> {
    let mut wb: Xlsx<_> = open_workbook_from_rs(Cursor::new(bytes)).map_err(unparseable)?;
    let name = match name {
        Some(n) => n.to_string(),
        None => wb.sheet_names().first().cloned().ok_or_else(|| unparseable("workbook has no sheets"))?,
    };
    let dim = wb.worksheet_cells_reader(&name).map_err(unparseable)?.dimensions();
    let range = wb.worksheet_range(&name).map_err(unparseable)?;
    let declared = (dim.end != (0, 0)).then_some(dim.end);
    Ok(sheet_grid(&range, declared))
}

/// Any workbook format calamine understands; first sheet only.
fn open_any_workbook(bytes: &[u8]) -> Result<Vec<Vec<String>>, ExportError> {
    let mut wb = open_workbook_auto_from_rs(Cursor::new(bytes)).map_err(unparseable)?;
    let range = wb.worksheet_range_at(0).ok_or_else(|| unparseable("workbook has no sheets"))?.map_err(unparseable)?;
    Ok(sheet_grid(&range, None))
}

/// Reads the value grid from the first sheet of a workbook.
pub fn xlsx_to_grid(bytes: &[u8]) -> Result<Vec<Vec<String>>, ExportError> {
    open_xlsx_sheet(bytes, None)
}

/// Reads the references sheet back as a grid, header row included.
pub fn xlsx_references(bytes: &[u8]) -> Result<Vec<Vec<String>>, ExportError> {
    open_xlsx_sheet(bytes, Some(REFERENCES_SHEET))
}

pub fn export_grid(grid: &[Vec<String>], references: Option<&BTreeMap<u32, MetaRecord>>, format: ExportFormat) -> Result<Vec<u8>, ExportError> {
    match format {
        ExportFormat::Csv => Ok(grid_to_csv(grid)),
        ExportFormat::Xlsx => grid_to_xlsx(grid, references),
    }
}

pub fn export_project(ds: &ProjectDataset, format: ExportFormat) -> Result<Vec<u8>, ExportError> {
    export_grid(&ds.value_grid(), Some(&ds.references), format)
}

pub fn export_document(ds: &DocumentDataset, format: ExportFormat) -> Result<Vec<u8>, ExportError> {
    export_grid(&ds.value_grid(), None, format)
}

fn looks_like_workbook(bytes: &[u8], filename: &str) -> bool {
    let ext = filename.rsplit('.').next().unwrap_or("").to_ascii_lowercase();
    matches!(ext.as_str(), "xlsx" | "xlsm" | "xls" | "xlsb" | "ods")
        || bytes.starts_with(b"PK\x03\x04")
        || bytes.starts_with(&[0xD0, 0xCF, 0x11, 0xE0])
}

/// Builds a header from the first row of a spreadsheet or CSV file. Cells are
/// trimmed and trailing empty cells dropped; the key defaults to the first
/// field.
pub fn header_from_spreadsheet(bytes: &[u8], filename: &str) -> Result<HeaderConfig, ExportError> {
    let grid = if looks_like_workbook(bytes, filename) {
        open_any_workbook(bytes)?
    } else {
        let text = std::str::from_utf8(bytes).map_err(|_| ExportError::UnparseableFile("not UTF-8 text".into()))?;
        csv_to_grid(text.trim_start_matches('\u{feff}').as_bytes())?
    };
    let mut row: Vec<String> = grid.into_iter().next().unwrap_or_default().iter().map(|c| c.trim().to_string()).collect();
    while row.last().is_some_and(String::is_empty) {
        row.pop();
    }
    if row.is_empty() {
        return Err(ExportError::EmptyHeaderRow);
    }
    Ok(HeaderConfig::from_row(&row)?)
}
