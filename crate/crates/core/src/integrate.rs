//! Joining confirmed fragments into per-document and per-project datasets.
//!
//! A document dataset is a full outer join of its keyed tables on the key
//! field. Values that belong to the document as a whole (linked text spans,
//! marked points not bound to a key, the Metadata ID) are broadcast to every
//! row. Points bound to a key fill the coordinate fields of that key's row.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::geom::normalize_whitespace;
use crate::map::MarkedPoint;
use crate::meta::MetaRecord;
use crate::table::{PipelineStage, TableArtifact};
use crate::text::EntitySpan;

pub const METADATA_ID: &str = "Metadata ID";
pub const REFERENCE_ID: &str = "Reference ID";
/// Separator between several document-scoped values landing in one cell.
pub const VALUE_SEPARATOR: &str = "; ";

/// Case-folded, parenthesized units removed, whitespace collapsed.
///
/// ```
/// assert_eq!(docmine_core::integrate::normalize_field("  Age (Ma) "), "age");
/// ```
pub fn normalize_field(name: &str) -> String {
    let mut out = String::new();
    let mut depth = 0usize;
    for c in name.chars() {
        match c {
            '(' => depth += 1,
            ')' if depth > 0 => depth -= 1,
            _ if depth == 0 => out.push(c),
            _ => {}
        }
    }
    normalize_whitespace(&out).to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderConfig {
    pub fields: Vec<String>,
    pub key_field: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum HeaderEdit {
    /// Inserts at `position`, or appends when absent.
    Add { name: String, position: Option<usize> },
    Remove { name: String },
    SetKey { name: String },
}

impl HeaderConfig {
    pub fn new(fields: Vec<String>, key_field: &str) -> Result<Self, CoreError> {
        let h = Self { fields, key_field: key_field.into() };
        h.validate()?;
        Ok(h)
    }

    /// Header from a spreadsheet's first row. The first field is the key
    /// until the user designates another.
    pub fn from_row(row: &[String]) -> Result<Self, CoreError> {
        let mut fields: Vec<String> = row.iter().map(|s| normalize_whitespace(s)).collect();
        while fields.last().is_some_and(String::is_empty) {
            fields.pop();
        }
        let Some(first) = fields.first().cloned() else {
            return Err(CoreError::EmptyHeaderRow);
        };
        if fields.iter().any(String::is_empty) {
            return Err(CoreError::Validation("header row has an empty cell between fields".into()));
        }
        Self::new(fields, &first)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.fields.is_empty() {
            return Err(CoreError::EmptyHeaderRow);
        }
        for (i, f) in self.fields.iter().enumerate() {
            if f.trim().is_empty() {
                return Err(CoreError::Validation("field names must not be empty".into()));
            }
            if self.fields[..i].contains(f) {
                return Err(CoreError::DuplicateField(f.clone()));
            }
            if f == METADATA_ID || f == REFERENCE_ID {
                return Err(CoreError::Validation(format!("`{f}` is a reserved column")));
            }
        }
        if !self.fields.contains(&self.key_field) {
            return Err(CoreError::KeyRemoved(self.key_field.clone()));
        }
        Ok(())
    }

    /// Applies a batch of edits atomically. Removing the key is allowed as
    /// long as a later edit in the batch designates a new one.
    pub fn apply(&self, edits: &[HeaderEdit]) -> Result<HeaderConfig, CoreError> {
        let mut h = self.clone();
        for edit in edits {
            match edit {
                HeaderEdit::Add { name, position } => {
                    let name = normalize_whitespace(name);
                    if name.is_empty() {
                        return Err(CoreError::Validation("field names must not be empty".into()));
                    }
                    if h.fields.contains(&name) {
                        return Err(CoreError::DuplicateField(name));
                    }
                    let at = position.unwrap_or(h.fields.len()).min(h.fields.len());
                    h.fields.insert(at, name);
                }
                HeaderEdit::Remove { name } => {
                    let i = h.fields.iter().position(|f| f == name).ok_or_else(|| CoreError::UnknownField(name.clone()))?;
                    h.fields.remove(i);
                }
                HeaderEdit::SetKey { name } => {
                    if !h.fields.contains(name) {
                        return Err(CoreError::UnknownField(name.clone()));
                    }
                    h.key_field = name.clone();
                }
            }
        }
        h.validate()?;
        Ok(h)
    }

    /// Identifies the header a dataset was built under.
    pub fn fingerprint(&self) -> String {
        let mut s = self.fields.join("\u{1f}");
        s.push('\u{1e}');
        s.push_str(&self.key_field);
        s
    }

    fn index_of_normalized(&self, name: &str) -> Option<usize> {
        let n = normalize_field(name);
        self.fields.iter().position(|f| normalize_field(f) == n)
    }
}

/// Table column index → header field, or `None` to ignore the column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub table_id: String,
    pub columns: Vec<Option<String>>,
}

impl ColumnMapping {
    pub fn maps_any(&self) -> bool {
        self.columns.iter().any(Option::is_some)
    }

    pub fn column_of(&self, field: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.as_deref() == Some(field))
    }

    pub fn validate(&self, header: &HeaderConfig) -> Result<(), CoreError> {
        for (i, c) in self.columns.iter().enumerate() {
            if let Some(f) = c {
                if !header.fields.contains(f) {
                    return Err(CoreError::UnknownField(f.clone()));
                }
                if self.columns[..i].iter().any(|p| p.as_ref() == Some(f)) {
                    return Err(CoreError::DuplicateField(f.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Matches the table's first row against the header by normalized name.
/// A field claimed by an earlier column leaves later matches ignored, each
/// with a warning.
pub fn infer_column_mapping(
    table: &TableArtifact,
    header: &HeaderConfig,
) -> Result<(ColumnMapping, Vec<String>), CoreError> {
    if table.stage != PipelineStage::ContentConfirmed {
        return Err(CoreError::InvalidStage { op: "infer_column_mapping", stage: table.stage.name() });
    }
    let grid = table.value_grid().unwrap_or_default();
    let head = grid.first().cloned().unwrap_or_default();
    let mut columns: Vec<Option<String>> = Vec::with_capacity(head.len());
    let mut warnings = Vec::new();
    for (i, text) in head.iter().enumerate() {
        let field = header.index_of_normalized(text).map(|k| header.fields[k].clone());
        match field {
            Some(f) if columns.iter().any(|c| c.as_ref() == Some(&f)) => {
                warnings.push(format!("table {}: column {i} also matches `{f}`; ignored", table.table_id));
                columns.push(None);
            }
            other => columns.push(other),
        }
    }
    Ok((ColumnMapping { table_id: table.table_id.clone(), columns }, warnings))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Table { table_id: String },
    Spans { span_ids: Vec<String> },
    Points { point_ids: Vec<String> },
    Meta { doc_id: String },
}

/// A value that lost to a later or more specific source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overridden {
    pub source: Source,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellProvenance {
    pub source: Source,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overridden: Vec<Overridden>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentDataset {
    pub doc_id: String,
    /// Header fields followed by [`METADATA_ID`].
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Parallel to `rows`; `None` for empty cells.
    pub provenance: Vec<Vec<Option<CellProvenance>>>,
    pub header_fingerprint: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl DocumentDataset {
    /// Column names followed by the rows.
    pub fn value_grid(&self) -> Vec<Vec<String>> {
        let mut g = Vec::with_capacity(self.rows.len() + 1);
        g.push(self.columns.clone());
        g.extend(self.rows.iter().cloned());
        g
    }
}

/// Names of the header fields that receive marked-point coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    pub latitude_field: String,
    pub longitude_field: String,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self { latitude_field: "latitude".into(), longitude_field: "longitude".into() }
    }
}

/// Everything confirmed for one document.
#[derive(Debug, Clone, Default)]
pub struct DocumentInputs<'a> {
    pub doc_id: &'a str,
    pub tables: Vec<(&'a TableArtifact, ColumnMapping)>,
    pub spans: Vec<&'a EntitySpan>,
    pub points: Vec<&'a MarkedPoint>,
}

struct Cell {
    value: String,
    prov: CellProvenance,
}

fn put(slot: &mut Option<Cell>, value: String, source: Source) {
    match slot {
        Some(cell) if cell.value != value || cell.prov.source != source => {
            let old = core::mem::replace(&mut cell.prov.source, source);
            let old_value = core::mem::replace(&mut cell.value, value);
            if old_value != cell.value {
                cell.prov.overridden.push(Overridden { source: old, value: old_value });
            }
        }
        Some(_) => {}
        None => *slot = Some(Cell { value, prov: CellProvenance { source, overridden: Vec::new() } }),
    }
}

fn format_coordinate(v: f64) -> String {
    format!("{v}")
}

/// Values joined in first-appearance order with duplicates dropped.
fn join_unique<'v>(values: impl Iterator<Item = &'v str>) -> String {
    let mut seen: Vec<&str> = Vec::new();
    for v in values {
        if !v.is_empty() && !seen.contains(&v) {
            seen.push(v);
        }
    }
    seen.join(VALUE_SEPARATOR)
}

/// Builds the per-document dataset.
///
/// Keyed rows appear in order of first appearance, walking tables in
/// confirmation order. Later-confirmed tables override earlier non-empty
/// values, and the losing value is kept in the cell's provenance. Empty table
/// cells never override. Rows whose key cell is empty are skipped.
///
/// Span and unattached-point values are document scoped and fill their column
/// on every row, except the key column of keyed rows. With no keyed rows a
/// single row carries them.
pub fn build_document_rows(
    inputs: &DocumentInputs<'_>,
    header: Option<&HeaderConfig>,
    opts: &IntegrationOptions,
) -> Result<DocumentDataset, CoreError> {
    let header = header.ok_or(CoreError::NoHeaderConfig)?;
    header.validate()?;
    let width = header.fields.len();
    let key_col = header.fields.iter().position(|f| *f == header.key_field).expect("validated");
    let mut warnings = Vec::new();

    let mut tables: Vec<&(&TableArtifact, ColumnMapping)> = inputs
        .tables
        .iter()
        .filter(|(t, m)| t.stage == PipelineStage::ContentConfirmed && m.maps_any())
        .collect();
    tables.sort_by(|a, b| {
        (a.0.confirmation_seq, &a.0.table_id).cmp(&(b.0.confirmation_seq, &b.0.table_id))
    });

    let mut keys: Vec<String> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut cells: Vec<Vec<Option<Cell>>> = Vec::new();

    for (table, mapping) in tables {
        mapping.validate(header)?;
        let key_idx = mapping
            .column_of(&header.key_field)
            .ok_or_else(|| CoreError::KeyFieldUnmapped(table.table_id.clone()))?;
        let grid = table.value_grid().unwrap_or_default();
        for row in grid.iter().skip(1) {
            let key = row.get(key_idx).map(|k| normalize_whitespace(k)).unwrap_or_default();
            if key.is_empty() {
                continue;
            }
            let r = *index.entry(key.clone()).or_insert_with(|| {
                keys.push(key.clone());
                cells.push((0..width).map(|_| None).collect());
                cells.len() - 1
            });
            for (c, field) in mapping.columns.iter().enumerate() {
                let Some(field) = field else { continue };
                let value = row.get(c).map(|v| normalize_whitespace(v)).unwrap_or_default();
                if value.is_empty() {
                    continue;
                }
                let f = header.fields.iter().position(|x| x == field).expect("mapping validated");
                let value = if f == key_col { key.clone() } else { value };
                put(&mut cells[r][f], value, Source::Table { table_id: table.table_id.clone() });
            }
        }
    }

    let lat_col = header.index_of_normalized(&opts.latitude_field);
    let lon_col = header.index_of_normalized(&opts.longitude_field);

    // Points bound to a key fill that key's row.
    let mut attached: BTreeMap<usize, Vec<&MarkedPoint>> = BTreeMap::new();
    let mut unattached: Vec<&MarkedPoint> = Vec::new();
    for p in &inputs.points {
        match &p.attached_key {
            Some(k) => match index.get(&normalize_whitespace(k)) {
                Some(&r) => attached.entry(r).or_default().push(p),
                None => warnings.push(format!("point {} is attached to unknown key `{k}`; ignored", p.point_id)),
            },
            None => unattached.push(p),
        }
    }

    let synthetic = keys.is_empty();
    if synthetic {
        cells.push((0..width).map(|_| None).collect());
    }

    let coordinate_values = |pts: &[&MarkedPoint]| -> (String, String, Source) {
        let lat: Vec<String> = pts.iter().map(|p| format_coordinate(p.latitude)).collect();
        let lon: Vec<String> = pts.iter().map(|p| format_coordinate(p.longitude)).collect();
        let ids = pts.iter().map(|p| p.point_id.clone()).collect();
        (
            join_unique(lat.iter().map(String::as_str)),
            join_unique(lon.iter().map(String::as_str)),
            Source::Points { point_ids: ids },
        )
    };
    // Keyed rows keep their key whatever else targets that column.
    let writable = |c: &usize| synthetic || *c != key_col;
    for (&r, pts) in &attached {
        let (lat, lon, src) = coordinate_values(pts);
        if let Some(c) = lat_col.filter(writable) {
            put(&mut cells[r][c], lat, src.clone());
        }
        if let Some(c) = lon_col.filter(writable) {
            put(&mut cells[r][c], lon, src);
        }
    }

    // Document-scoped values: the same on every row.
    let mut broadcast: Vec<(usize, String, Source)> = Vec::new();
    if !unattached.is_empty() {
        let (lat, lon, src) = coordinate_values(&unattached);
        if let Some(c) = lat_col {
            broadcast.push((c, lat, src.clone()));
        }
        if let Some(c) = lon_col {
            broadcast.push((c, lon, src));
        }
    }
    let mut linked: Vec<&EntitySpan> = inputs.spans.iter().copied().filter(|s| !s.stale && s.linked_field.is_some()).collect();
    linked.sort_by(|a, b| (a.section_index, a.start, &a.span_id).cmp(&(b.section_index, b.start, &b.span_id)));
    for (c, field) in header.fields.iter().enumerate() {
        let spans: Vec<&EntitySpan> = linked.iter().copied().filter(|s| s.linked_field.as_ref() == Some(field)).collect();
        if spans.is_empty() {
            continue;
        }
        let value = join_unique(spans.iter().map(|s| s.text.as_str()));
        broadcast.push((c, value, Source::Spans { span_ids: spans.iter().map(|s| s.span_id.clone()).collect() }));
    }
    for (c, value, src) in broadcast {
        if value.is_empty() || !writable(&c) {
            continue;
        }
        for row in cells.iter_mut() {
            put(&mut row[c], value.clone(), src.clone());
        }
    }

    let mut columns = header.fields.clone();
    columns.push(METADATA_ID.into());
    let mut rows = Vec::with_capacity(cells.len());
    let mut provenance = Vec::with_capacity(cells.len());
    for row in cells {
        let mut values = Vec::with_capacity(width + 1);
        let mut prov = Vec::with_capacity(width + 1);
        for cell in row {
            match cell {
                Some(c) => {
                    values.push(c.value);
                    prov.push(Some(c.prov));
                }
                None => {
                    values.push(String::new());
                    prov.push(None);
                }
            }
        }
        values.push(inputs.doc_id.to_string());
        prov.push(Some(CellProvenance { source: Source::Meta { doc_id: inputs.doc_id.into() }, overridden: Vec::new() }));
        rows.push(values);
        provenance.push(prov);
    }
    Ok(DocumentDataset {
        doc_id: inputs.doc_id.into(),
        columns,
        rows,
        provenance,
        header_fingerprint: header.fingerprint(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectDataset {
    /// Header fields followed by [`REFERENCE_ID`].
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub references: BTreeMap<u32, MetaRecord>,
}

impl ProjectDataset {
    pub fn value_grid(&self) -> Vec<Vec<String>> {
        let mut g = Vec::with_capacity(self.rows.len() + 1);
        g.push(self.columns.clone());
        g.extend(self.rows.iter().cloned());
        g
    }
}

/// Concatenates document datasets in import order. Document `i` receives
/// Reference ID `i + 1`, which replaces the Metadata ID column.
pub fn integrate_project(
    docs: &[(&DocumentDataset, &MetaRecord)],
    header: &HeaderConfig,
) -> Result<ProjectDataset, CoreError> {
    let fp = header.fingerprint();
    let mut columns = header.fields.clone();
    columns.push(REFERENCE_ID.into());
    let mut rows = Vec::new();
    let mut references = BTreeMap::new();
    for (i, (doc, meta)) in docs.iter().enumerate() {
        if doc.header_fingerprint != fp {
            return Err(CoreError::HeaderMismatch(doc.doc_id.clone()));
        }
        let id = u32::try_from(i + 1).map_err(|_| CoreError::Validation("too many documents".into()))?;
        references.insert(id, (*meta).clone());
        for row in &doc.rows {
            let mut r: Vec<String> = row[..header.fields.len()].to_vec();
            r.push(id.to_string());
            rows.push(r);
        }
    }
    Ok(ProjectDataset { columns, rows, references })
}
