use docmine_core::geom::{BBox, Point};
use docmine_core::integrate::{build_document_rows, ColumnMapping, DocumentInputs, HeaderConfig, IntegrationOptions};
use docmine_core::map::MarkedPoint;
use docmine_core::table::{CellContent, CellSource, GridStructure, PipelineStage, TableArtifact};
use docmine_core::text::{EntitySpan, SpanSource};
use docmine_core::time::Timestamp;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use super::{squash, Rng};

const FIELD_POOL: &[&str] = &["sample", "age", "error", "locality", "Latitude (°)", "longitude", "rock type", "notes"];
const KEYS: &[&str] = &["S1", "S2", " S2 ", "S3", "S 4", "S  4", "S5", "S6", "S7", ""];
const VALUES: &[&str] = &["1.5", "2", " 3.25 ", "granite", "Palma  Sola", "", "", "n.d.", "a,b", "x\"y"];
const SPAN_TEXTS: &[&str] = &["Palma Sola", "Riachuelos", "granite", "Palma Sola", "Late Cretaceous"];

pub struct Case {
    pub doc_id: String,
    pub header: HeaderConfig,
    pub tables: Vec<(TableArtifact, ColumnMapping)>,
    pub spans: Vec<EntitySpan>,
    pub points: Vec<MarkedPoint>,
}

impl Case {
    pub fn inputs(&self) -> DocumentInputs<'_> {
        DocumentInputs {
            doc_id: &self.doc_id,
            tables: self.tables.iter().map(|(t, m)| (t, m.clone())).collect(),
            spans: self.spans.iter().collect(),
            points: self.points.iter().collect(),
        }
    }
}

/// A confirmed table holding `grid` verbatim, header row included.
pub fn table(id: &str, seq: u64, grid: &[Vec<String>]) -> TableArtifact {
    let rows = grid.len();
    let cols = grid[0].len();
    let mut t = TableArtifact::detected(id, "d", 0, BBox::new(0.0, 0.0, cols as f64, rows as f64), Timestamp(0));
    t.stage = PipelineStage::ContentConfirmed;
    t.grid = Some(GridStructure {
        row_bounds: (0..=rows).map(|r| r as f64).collect(),
        col_bounds: (0..=cols).map(|c| c as f64).collect(),
        merges: vec![],
    });
    let mut cells = Vec::new();
    for (r, row) in grid.iter().enumerate() {
        for (c, text) in row.iter().enumerate() {
            cells.push(CellContent { row: r, col: c, text: text.clone(), source: CellSource::TextLayer, edited: false });
        }
    }
    t.cells = Some(cells);
    t.confirmation_seq = Some(seq);
    t
}

pub fn random_case(rng: &mut Rng) -> Case {
    let mut fields: Vec<String> = FIELD_POOL.iter().map(|s| s.to_string()).collect();
    fields.shuffle(rng);
    fields.truncate(rng.random_range(2..=6));
    let key_field = fields.choose(rng).unwrap().clone();
    let header = HeaderConfig::new(fields.clone(), &key_field).unwrap();

    let mut seqs: Vec<u64> = (1..=10).collect();
    seqs.shuffle(rng);
    let n_tables = rng.random_range(1..=3);
    let mut tables = Vec::new();
    for (i, &seq) in seqs.iter().enumerate().take(n_tables) {
        let cols = rng.random_range(1..=6);
        let rows = rng.random_range(0..=100);
        let mut grid = vec![(0..cols).map(|c| format!("h{c}")).collect::<Vec<String>>()];
        for _ in 0..rows {
            grid.push((0..cols).map(|_| VALUES.choose(rng).unwrap().to_string()).collect());
        }
        let mut slots: Vec<usize> = (0..cols).collect();
        slots.shuffle(rng);
        let mut columns: Vec<Option<String>> = vec![None; cols];
        columns[slots[0]] = Some(key_field.clone());
        let mut others: Vec<&String> = fields.iter().filter(|f| **f != key_field).collect();
        others.shuffle(rng);
        for (&slot, f) in slots[1..].iter().zip(others) {
            if rng.random_bool(0.8) {
                columns[slot] = Some(f.clone());
            }
        }
        for row in grid.iter_mut().skip(1) {
            row[slots[0]] = KEYS.choose(rng).unwrap().to_string();
        }
        let mut t = table(&format!("t{i}"), seq, &grid);
        if rng.random_bool(0.1) {
            t.stage = PipelineStage::ContentProposed;
            t.confirmation_seq = None;
        }
        tables.push((t, ColumnMapping { table_id: format!("t{i}"), columns }));
    }

    let spans = (0..rng.random_range(0..=6))
        .map(|i| {
            let text = SPAN_TEXTS.choose(rng).unwrap().to_string();
            EntitySpan {
                span_id: format!("s{i}"),
                doc_id: "d".into(),
                section_index: rng.random_range(0..3),
                start: rng.random_range(0..50),
                end: 60,
                label: "l".into(),
                text,
                source: SpanSource::Auto,
                linked_field: rng.random_bool(0.7).then(|| fields.choose(rng).unwrap().clone()),
                stale: rng.random_bool(0.15),
            }
        })
        .collect();
    let points = (0..rng.random_range(0..=5))
        .map(|i| MarkedPoint {
            point_id: format!("p{i}"),
            pixel: Point::new(0.0, 0.0),
            latitude: (rng.random_range(-90_000_000..=90_000_000) as f64) / 1e6,
            longitude: (rng.random_range(-180_000_000..=180_000_000) as f64) / 1e6,
            attached_key: match rng.random_range(0..3) {
                0 => None,
                1 => Some(KEYS.choose(rng).unwrap().to_string()),
                _ => Some("unknown".into()),
            },
        })
        .collect();
    Case { doc_id: "doc-1".into(), header, tables, spans, points }
}

/// Lower-case, parenthesized text dropped, whitespace collapsed.
fn field_name(s: &str) -> String {
    let mut out = String::new();
    let mut depth = 0;
    for c in s.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ if depth == 0 => out.push(c),
            _ => {}
        }
    }
    squash(&out).to_lowercase()
}

fn distinct_join(values: impl IntoIterator<Item = String>) -> String {
    let mut seen: Vec<String> = Vec::new();
    for v in values {
        if !v.is_empty() && !seen.contains(&v) {
            seen.push(v);
        }
    }
    seen.join("; ")
}

/// Nested-loop full outer join over the confirmed tables, then point and
/// span values. Returns value rows without the column header.
pub fn oracle(case: &Case, opts: &IntegrationOptions) -> Vec<Vec<String>> {
    let fields = &case.header.fields;
    let key_col = fields.iter().position(|f| *f == case.header.key_field).unwrap();
    let mut tables: Vec<&(TableArtifact, ColumnMapping)> = case
        .tables
        .iter()
        .filter(|(t, m)| t.stage == PipelineStage::ContentConfirmed && m.columns.iter().any(Option::is_some))
        .collect();
    tables.sort_by_key(|(t, _)| (t.confirmation_seq, t.table_id.clone()));
    let grids: Vec<Vec<Vec<String>>> = tables.iter().map(|(t, _)| t.value_grid().unwrap()).collect();
    let key_of = |ti: usize, row: &[String]| -> String {
        let kc = tables[ti].1.columns.iter().position(|c| c.as_deref() == Some(case.header.key_field.as_str())).unwrap();
        squash(&row[kc])
    };

    // Key universe in order of first appearance.
    let mut keys: Vec<String> = Vec::new();
    for (ti, grid) in grids.iter().enumerate() {
        for row in &grid[1..] {
            let k = key_of(ti, row);
            if !k.is_empty() && !keys.contains(&k) {
                keys.push(k);
            }
        }
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    for k in &keys {
        let mut out = vec![String::new(); fields.len()];
        for (f, field) in fields.iter().enumerate() {
            for (ti, grid) in grids.iter().enumerate() {
                let Some(c) = tables[ti].1.columns.iter().position(|x| x.as_ref() == Some(field)) else { continue };
                for row in &grid[1..] {
                    if key_of(ti, row) == *k {
                        let v = squash(&row[c]);
                        if !v.is_empty() {
                            out[f] = v;
                        }
                    }
                }
            }
        }
        out[key_col] = k.clone();
        rows.push(out);
    }
    if rows.is_empty() {
        rows.push(vec![String::new(); fields.len()]);
    }

    let lat = fields.iter().position(|f| field_name(f) == field_name(&opts.latitude_field));
    let lon = fields.iter().position(|f| field_name(f) == field_name(&opts.longitude_field));
    let keyed = !keys.is_empty();
    let lat_pt = lat.filter(|c| !keyed || *c != key_col);
    let lon_pt = lon.filter(|c| !keyed || *c != key_col);
    for (r, k) in keys.iter().enumerate() {
        let mine: Vec<&MarkedPoint> =
            case.points.iter().filter(|p| p.attached_key.as_deref().map(squash).as_deref() == Some(k.as_str())).collect();
        if mine.is_empty() {
            continue;
        }
        if let Some(c) = lat_pt {
            rows[r][c] = distinct_join(mine.iter().map(|p| p.latitude.to_string()));
        }
        if let Some(c) = lon_pt {
            rows[r][c] = distinct_join(mine.iter().map(|p| p.longitude.to_string()));
        }
    }

    let loose: Vec<&MarkedPoint> = case.points.iter().filter(|p| p.attached_key.is_none()).collect();
    let mut broadcast: Vec<(usize, String)> = Vec::new();
    if !loose.is_empty() {
        if let Some(c) = lat {
            broadcast.push((c, distinct_join(loose.iter().map(|p| p.latitude.to_string()))));
        }
        if let Some(c) = lon {
            broadcast.push((c, distinct_join(loose.iter().map(|p| p.longitude.to_string()))));
        }
    }
    for (c, field) in fields.iter().enumerate() {
        let mut linked: Vec<&EntitySpan> =
            case.spans.iter().filter(|s| !s.stale && s.linked_field.as_ref() == Some(field)).collect();
        linked.sort_by_key(|s| (s.section_index, s.start, s.span_id.clone()));
        if !linked.is_empty() {
            broadcast.push((c, distinct_join(linked.iter().map(|s| s.text.clone()))));
        }
    }
    for (c, v) in broadcast {
        if keyed && c == key_col {
            continue;
        }
        for row in rows.iter_mut() {
            row[c] = v.clone();
        }
    }
    for row in rows.iter_mut() {
        row.push(case.doc_id.clone());
    }
    rows
}

pub fn check(seed: u64) -> Result<(), String> {
    let mut rng = super::rng(seed);
    let case = random_case(&mut rng);
    let opts = IntegrationOptions { latitude_field: "latitude".into(), longitude_field: "longitude".into() };
    let ds = build_document_rows(&case.inputs(), Some(&case.header), &opts).map_err(|e| e.to_string())?;
    let want = oracle(&case, &opts);
    if ds.rows != want {
        let first = ds.rows.iter().zip(&want).position(|(a, b)| a != b);
        return Err(format!(
            "header {:?}: {} rows vs {} expected; first difference at {first:?}: {:?} vs {:?}",
            case.header,
            ds.rows.len(),
            want.len(),
            first.map(|i| &ds.rows[i]),
            first.map(|i| &want[i])
        ));
    }
    let mut columns = case.header.fields.clone();
    columns.push("Metadata ID".into());
    if ds.columns != columns {
        return Err(format!("columns {:?}", ds.columns));
    }
    Ok(())
}
