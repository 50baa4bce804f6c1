//! Per-document state and the operations on it: metadata, tables, maps,
//! text spans and integration.

use std::collections::BTreeMap;

use docmine_core::correction::{Adjustment, Module};
use docmine_core::geom::{BBox, PageModel, Point};
use docmine_core::integrate::{
    build_document_rows, infer_column_mapping, integrate_project, ColumnMapping, DocumentDataset, DocumentInputs,
    HeaderConfig, IntegrationOptions, ProjectDataset,
};
use docmine_core::lock::UserId;
use docmine_core::map::{detect_gridlines, detect_map_regions, Calibration, GridlineEdit, MapArtifact, MapStage, MarkedPoint, LABEL_BAND};
use docmine_core::meta::{heuristic_candidate, vote_merge, MetaRecord, SourceCandidate};
use docmine_core::table::{
    detect_table_regions, recognize_content, recognize_structure, GridStructure, PipelineStage, StructureEdit,
    TableArtifact, TableConfig,
};
use docmine_core::text::{annotate, char_slice, extract_sections, EntitySpan, SpanSource};
use docmine_core::time::Timestamp;
use docmine_core::CoreError;
use serde::{Deserialize, Serialize};

use super::{Inner, ParseStatus, Project, Result, Store, StoreError, StoreState};
use crate::adapters::{external_candidates, DocumentOcr, RegionKind};
use crate::export::{export_document, export_project, ExportFormat};
use crate::ingest::{parse_pdf, IngestError};
use crate::rules::compile_labels;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocumentState {
    /// Stored as a separate blob; see `Store::open`.
    #[serde(skip)]
    pub pages: Vec<PageModel>,
    pub sections: Vec<String>,
    pub candidates: Vec<SourceCandidate>,
    pub meta: MetaRecord,
    pub tables: Vec<TableArtifact>,
    pub maps: Vec<MapArtifact>,
    pub spans: Vec<EntitySpan>,
    /// User-set column mappings by table id. Tables without one use the
    /// inferred mapping.
    pub mappings: BTreeMap<String, ColumnMapping>,
    pub dataset: Option<DocumentDataset>,
    pub next_id: u64,
}

impl DocumentState {
    fn fresh_id(&mut self, prefix: &str) -> String {
        self.next_id += 1;
        format!("{prefix}{}", self.next_id)
    }

    fn page(&self, index: usize) -> Result<&PageModel> {
        self.pages
            .get(index)
            .ok_or_else(|| CoreError::Validation(format!("document has no page {index}")).into())
    }

    fn table(&self, id: &str) -> Result<&TableArtifact> {
        self.tables.iter().find(|t| t.table_id == id).ok_or_else(|| StoreError::UnknownTable(id.into()))
    }

    fn table_mut(&mut self, id: &str) -> Result<&mut TableArtifact> {
        self.tables.iter_mut().find(|t| t.table_id == id).ok_or_else(|| StoreError::UnknownTable(id.into()))
    }

    fn map(&self, id: &str) -> Result<&MapArtifact> {
        self.maps.iter().find(|m| m.map_id == id).ok_or_else(|| StoreError::UnknownMap(id.into()))
    }

    fn map_mut(&mut self, id: &str) -> Result<&mut MapArtifact> {
        self.maps.iter_mut().find(|m| m.map_id == id).ok_or_else(|| StoreError::UnknownMap(id.into()))
    }

    fn span_index(&self, id: &str) -> Result<usize> {
        self.spans.iter().position(|s| s.span_id == id).ok_or_else(|| CoreError::UnknownSpan(id.into()).into())
    }

    /// True when integration has something confirmed to work with.
    pub fn has_confirmed_content(&self) -> bool {
        self.tables.iter().any(|t| t.stage == PipelineStage::ContentConfirmed)
            || self.maps.iter().any(|m| !m.points.is_empty())
            || self.spans.iter().any(|s| s.linked_field.is_some() && !s.stale)
    }

    /// The user's mapping restricted to current header fields, or the
    /// inferred one.
    fn effective_mapping(&self, table: &TableArtifact, header: &HeaderConfig) -> Result<(ColumnMapping, Vec<String>), CoreError> {
        match self.mappings.get(&table.table_id) {
            Some(m) => {
                let columns = m.columns.iter().map(|c| c.clone().filter(|f| header.fields.contains(f))).collect();
                Ok((ColumnMapping { table_id: m.table_id.clone(), columns }, Vec::new()))
            }
            None => infer_column_mapping(table, header),
        }
    }

    /// Builds the document dataset from confirmed artifacts.
    pub fn build_dataset(&self, doc_id: &str, header: Option<&HeaderConfig>, opts: &IntegrationOptions) -> Result<DocumentDataset, CoreError> {
        let header = header.ok_or(CoreError::NoHeaderConfig)?;
        let mut warnings = Vec::new();
        let mut tables = Vec::new();
        for t in self.tables.iter().filter(|t| t.stage == PipelineStage::ContentConfirmed) {
            let (mapping, w) = self.effective_mapping(t, header)?;
            warnings.extend(w);
            tables.push((t, mapping));
        }
        let points: Vec<&MarkedPoint> = self.maps.iter().flat_map(|m| &m.points).collect();
        let inputs = DocumentInputs { doc_id, tables, spans: self.spans.iter().collect(), points };
        let mut ds = build_document_rows(&inputs, Some(header), opts)?;
        warnings.append(&mut ds.warnings);
        ds.warnings = warnings;
        Ok(ds)
    }
}

/// Metadata candidates next to the current record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaView {
    pub candidates: Vec<SourceCandidate>,
    pub record: MetaRecord,
}

/// Regions whose text is not running prose: detected tables, and detected
/// maps together with their label bands.
fn prose_exclusions(pages: &[PageModel], cfg: &TableConfig) -> Vec<(usize, BBox)> {
    let mut zones = Vec::new();
    for p in pages {
        zones.extend(detect_table_regions(p, cfg).into_iter().map(|r| (p.page_index, r)));
        zones.extend(detect_map_regions(p).into_iter().map(|r| (p.page_index, r.expand(LABEL_BAND))));
    }
    zones
}

/// Runs every label over the sections. Spans take the label's linked field
/// when the header has it.
fn auto_spans(doc: &mut DocumentState, doc_id: &str, project: &Project) -> Result<Vec<EntitySpan>, CoreError> {
    let labels = compile_labels(&project.label_configs)?;
    let matches = annotate(&doc.sections, &labels);
    let mut out = Vec::with_capacity(matches.len());
    for m in matches {
        let cfg = project.label_configs.iter().find(|c| c.label == m.label);
        let linked_field = cfg
            .and_then(|c| c.linked_field.clone())
            .filter(|f| project.header.as_ref().is_some_and(|h| h.fields.contains(f)));
        out.push(EntitySpan {
            span_id: doc.fresh_id("s"),
            doc_id: doc_id.into(),
            section_index: m.section_index,
            start: m.start,
            end: m.end,
            label: m.label,
            text: m.text,
            source: SpanSource::Auto,
            linked_field,
            stale: false,
        });
    }
    Ok(out)
}

fn page_box(page: &PageModel) -> BBox {
    BBox::new(0.0, 0.0, page.width, page.height)
}

/// Mutable view handed to document edits.
pub(crate) struct DocCtx<'a> {
    pub doc: &'a mut DocumentState,
    pub project: &'a Project,
    pub file_id: &'a str,
    pub now: Timestamp,
    pub confirmation: &'a mut u64,
    pub adjustments: Vec<Adjustment>,
}

impl DocCtx<'_> {
    fn note(&mut self, adj: Option<Adjustment>) {
        self.adjustments.extend(adj);
    }
}

/// Replaces unconfirmed detections by `regions`, keeping ids of detections
/// that did not move and skipping regions already covered by work in
/// progress. Returns (page, region, reused id) per region to keep.
fn merge_detections(
    regions: &[(usize, BBox)],
    existing: &[(String, usize, BBox, bool)],
) -> (Vec<String>, Vec<(usize, BBox)>) {
    let mut keep = Vec::new();
    let mut fresh = Vec::new();
    for &(page, region) in regions {
        if let Some((id, ..)) = existing.iter().find(|(_, p, r, detected)| *detected && *p == page && *r == region) {
            keep.push(id.clone());
        } else if !existing.iter().any(|(_, p, r, detected)| !*detected && *p == page && r.iou(&region) > 0.5) {
            fresh.push((page, region));
        }
    }
    (keep, fresh)
}

impl Store {
    fn read_doc<T>(&self, file_id: &str, f: impl FnOnce(&DocumentState, &Project) -> Result<T>) -> Result<T> {
        self.read(|inner, _| {
            let rec = inner.file(file_id)?;
            let project = inner.project(&rec.project_id)?;
            let doc = inner.state.documents.get(file_id).ok_or_else(|| StoreError::NotParsed(file_id.into()))?;
            f(doc, project)
        })
    }

    /// Fails fast when `user` cannot edit the file, before slow work.
    fn check_editor(&self, user: &UserId, file_id: &str) -> Result<()> {
        self.read(|inner, now| {
            let rec = inner.file(file_id)?;
            let lock = docmine_core::lock::FileLock { lease: rec.lock.clone(), principal: rec.principal.clone() };
            lock.check_holder(user, now)?;
            if !inner.state.documents.contains_key(file_id) {
                return Err(StoreError::NotParsed(file_id.into()));
            }
            Ok(())
        })
    }

    /// Runs a lock-guarded edit of one document and logs its adjustments.
    fn edit_doc<T>(&self, user: &UserId, file_id: &str, f: impl FnOnce(&mut DocCtx<'_>) -> Result<T>) -> Result<T> {
        self.write(|inner, now| {
            let (out, adjustments) = {
                let StoreState { files, projects, documents, counters, .. } = &mut inner.state;
                let rec = files.get_mut(file_id).ok_or_else(|| StoreError::UnknownDocument(file_id.into()))?;
                rec.with_lock(|l| l.check_holder(user, now))?;
                let doc = documents.get_mut(file_id).ok_or_else(|| StoreError::NotParsed(file_id.into()))?;
                let project = projects.get(&rec.project_id).ok_or_else(|| StoreError::UnknownProject(rec.project_id.clone()))?;
                let pages = std::mem::take(&mut doc.pages);
                let prior = doc.clone();
                doc.pages = pages;
                let mut cx =
                    DocCtx { doc, project, file_id, now, confirmation: &mut counters.confirmation, adjustments: Vec::new() };
                let out = f(&mut cx)?;
                let adjustments = cx.adjustments;
                let pages = std::mem::take(&mut doc.pages);
                let unchanged = adjustments.is_empty() && *doc == prior;
                doc.pages = pages;
                if unchanged {
                    return Ok(out);
                }
                rec.with_lock(|l| l.authorize_mutation(user, now))?;
                rec.last_editor = Some(user.clone());
                rec.updated_at = now;
                (out, adjustments)
            };
            for a in adjustments {
                inner.log(file_id, a, user, now);
            }
            inner.reindex(file_id);
            Ok(out)
        })
    }

    // ---- upload processing ----

    fn analyze(&self, file_id: &str, bytes: &[u8], project: &Project) -> Result<(DocumentState, Vec<String>), IngestError> {
        let pages = parse_pdf(bytes)?;
        let mut heuristic = heuristic_candidate(&pages);
        heuristic.priority = self.settings.heuristic_priority;
        let (external, warnings) = external_candidates(&self.adapters.meta_parsers, bytes);
        let mut candidates = vec![heuristic];
        candidates.extend(external);
        let meta = vote_merge(&candidates).expect("the heuristic candidate is always present");
        let zones = prose_exclusions(&pages, &self.settings.table);
        let sections = extract_sections(&pages, &zones);
        let mut doc = DocumentState { pages, sections, candidates, meta, ..Default::default() };
        let mut warnings = warnings;
        match auto_spans(&mut doc, file_id, project) {
            Ok(spans) => doc.spans = spans,
            Err(e) => warnings.push(format!("pre-annotation skipped: {e}")),
        }
        Ok((doc, warnings))
    }

    /// Parses a pending upload: page models, metadata candidates and vote,
    /// text sections and rule spans. Parse failures end in the failed state
    /// rather than an error. Already processed files are returned unchanged.
    pub fn process_upload(&self, file_id: &str) -> Result<super::FileRecord> {
        let (project, status) = self.read(|inner, _| {
            let rec = inner.file(file_id)?;
            Ok((inner.project(&rec.project_id)?.clone(), rec.status.clone()))
        })?;
        if status != ParseStatus::Pending {
            return self.get_file(file_id);
        }
        let bytes = self.file_bytes(file_id)?;
        match self.analyze(file_id, &bytes, &project) {
            Ok((doc, warnings)) => {
                self.save_pages(file_id, &doc.pages)?;
                self.write(|inner, now| {
                    let rec = inner.file_mut(file_id)?;
                    rec.status = ParseStatus::Parsed;
                    rec.page_count = doc.pages.len();
                    rec.warnings = warnings;
                    rec.updated_at = now;
                    let view = rec.view(now);
                    inner.state.documents.insert(file_id.into(), doc);
                    inner.reindex(file_id);
                    Ok(view)
                })
            }
            Err(e) => self.write(|inner, now| {
                let rec = inner.file_mut(file_id)?;
                rec.status = ParseStatus::Failed { detail: e.to_string() };
                rec.updated_at = now;
                Ok(rec.view(now))
            }),
        }
    }

    /// Re-integrates documents of a project after its header changed.
    /// Documents that no longer integrate lose their dataset and get a
    /// warning.
    pub(super) fn reapply_header(&self, inner: &mut Inner, project_id: &str) {
        let header = inner.state.projects.get(project_id).and_then(|p| p.header.clone());
        let ids: Vec<String> =
            inner.state.files.values().filter(|f| f.project_id == project_id).map(|f| f.file_id.clone()).collect();
        for id in ids {
            let Some(doc) = inner.state.documents.get(&id) else { continue };
            if doc.dataset.is_none() {
                continue;
            }
            let rebuilt = doc.build_dataset(&id, header.as_ref(), &self.settings.integration);
            let doc = inner.state.documents.get_mut(&id).expect("present");
            match rebuilt {
                Ok(ds) => doc.dataset = Some(ds),
                Err(e) => {
                    doc.dataset = None;
                    if let Some(rec) = inner.state.files.get_mut(&id) {
                        rec.warnings.push(format!("dataset dropped after header change: {e}"));
                    }
                }
            }
        }
    }

    // ---- metadata ----

    pub fn get_meta(&self, file_id: &str) -> Result<MetaView> {
        self.read_doc(file_id, |doc, _| Ok(MetaView { candidates: doc.candidates.clone(), record: doc.meta.clone() }))
    }

    /// Stores a user-corrected record; the previous one goes to the
    /// correction log.
    pub fn save_meta(&self, user: &UserId, file_id: &str, mut record: MetaRecord) -> Result<MetaRecord> {
        self.edit_doc(user, file_id, |cx| {
            record.validate()?;
            record.edited_by_user = true;
            let before = serde_json::to_value(&cx.doc.meta).unwrap_or_default();
            let after = serde_json::to_value(&record).unwrap_or_default();
            cx.adjustments.push(Adjustment::new(Module::Meta, None, "save_meta", before, after));
            cx.doc.meta = record.clone();
            Ok(record)
        })
    }

    /// Parsed page geometry, for drawing overlays.
    pub fn pages(&self, file_id: &str) -> Result<Vec<PageModel>> {
        self.read_doc(file_id, |doc, _| Ok(doc.pages.clone()))
    }

    // ---- text ----

    pub fn sections(&self, file_id: &str) -> Result<Vec<String>> {
        self.read_doc(file_id, |doc, _| Ok(doc.sections.clone()))
    }

    pub fn list_spans(&self, file_id: &str) -> Result<Vec<EntitySpan>> {
        self.read_doc(file_id, |doc, _| Ok(doc.spans.clone()))
    }

    /// Adds a span over character offsets. Repeating an existing range and
    /// label returns the existing span.
    pub fn add_manual_span(&self, user: &UserId, file_id: &str, section: usize, start: usize, end: usize, label: &str) -> Result<EntitySpan> {
        self.edit_doc(user, file_id, |cx| {
            if !cx.project.label_configs.iter().any(|l| l.label == label) {
                return Err(CoreError::UnknownLabel(label.into()).into());
            }
            let text = cx
                .doc
                .sections
                .get(section)
                .filter(|_| start < end)
                .and_then(|s| char_slice(s, start, end))
                .ok_or(CoreError::InvalidOffsets { start, end })?
                .to_string();
            if let Some(s) = cx.doc.spans.iter().find(|s| s.section_index == section && s.start == start && s.end == end && s.label == label) {
                return Ok(s.clone());
            }
            let span = EntitySpan {
                span_id: cx.doc.fresh_id("s"),
                doc_id: cx.file_id.into(),
                section_index: section,
                start,
                end,
                label: label.into(),
                text,
                source: SpanSource::Manual,
                linked_field: None,
                stale: false,
            };
            cx.doc.spans.push(span.clone());
            Ok(span)
        })
    }

    /// Removes a span. Removing a rule-produced span is logged as negative
    /// feedback.
    pub fn delete_span(&self, user: &UserId, file_id: &str, span_id: &str) -> Result<EntitySpan> {
        self.edit_doc(user, file_id, |cx| {
            let i = cx.doc.span_index(span_id)?;
            let span = cx.doc.spans.remove(i);
            if span.source == SpanSource::Auto {
                let before = serde_json::to_value(&span).unwrap_or_default();
                cx.adjustments.push(Adjustment::new(Module::Text, Some(span_id), "delete_span", before, serde_json::Value::Null));
            }
            Ok(span)
        })
    }

    /// Links a span to a header field, replacing any previous link, or
    /// unlinks it with `None`.
    pub fn link_span(&self, user: &UserId, file_id: &str, span_id: &str, field: Option<&str>) -> Result<EntitySpan> {
        self.edit_doc(user, file_id, |cx| {
            if let Some(f) = field {
                let header = cx.project.header.as_ref().ok_or(CoreError::NoHeaderConfig)?;
                if !header.fields.iter().any(|h| h == f) {
                    return Err(CoreError::UnknownField(f.into()).into());
                }
            }
            let i = cx.doc.span_index(span_id)?;
            let span = &mut cx.doc.spans[i];
            span.linked_field = field.map(String::from);
            Ok(span.clone())
        })
    }

    /// Re-runs the label rules. Manual spans and linked rule spans stay;
    /// other rule spans are replaced by the fresh matches.
    pub fn reannotate(&self, user: &UserId, file_id: &str) -> Result<Vec<EntitySpan>> {
        self.edit_doc(user, file_id, |cx| {
            let fresh = auto_spans(cx.doc, cx.file_id, cx.project)?;
            cx.doc.spans.retain(|s| s.source == SpanSource::Manual || s.linked_field.is_some());
            for s in fresh {
                let dup = cx.doc.spans.iter().any(|k| {
                    k.section_index == s.section_index && k.start == s.start && k.end == s.end && k.label == s.label
                });
                if !dup {
                    cx.doc.spans.push(s);
                }
            }
            Ok(cx.doc.spans.clone())
        })
    }

    // ---- tables ----

    pub fn list_tables(&self, file_id: &str) -> Result<Vec<TableArtifact>> {
        self.read_doc(file_id, |doc, _| Ok(doc.tables.clone()))
    }

    pub fn get_table(&self, file_id: &str, table_id: &str) -> Result<TableArtifact> {
        self.read_doc(file_id, |doc, _| doc.table(table_id).cloned())
    }

    fn detect_regions(&self, user: &UserId, file_id: &str, kind: RegionKind) -> Result<Vec<(usize, BBox)>> {
        self.check_editor(user, file_id)?;
        let builtin = |page: &PageModel| match kind {
            RegionKind::Table => detect_table_regions(page, &self.settings.table),
            RegionKind::Map => detect_map_regions(page),
        };
        let external = match kind {
            RegionKind::Table => self.adapters.table_detector.as_deref(),
            RegionKind::Map => self.adapters.map_detector.as_deref(),
        };
        let Some(detector) = external else {
            return self.read_doc(file_id, |doc, _| {
                Ok(doc.pages.iter().flat_map(|p| builtin(p).into_iter().map(|r| (p.page_index, r))).collect())
            });
        };
        let pages = self.read_doc(file_id, |doc, _| Ok(doc.pages.clone()))?;
        let pdf = self.file_bytes(file_id)?;
        let mut out = Vec::new();
        for p in &pages {
            let regions = match detector.detect(kind, &pdf, p.page_index, &page_box(p)) {
                Ok(r) => r.into_iter().filter_map(|r| r.intersection(&page_box(p))).collect(),
                Err(e) => {
                    tracing::warn!(file_id, error = %e, "external detector failed; using the built-in detector");
                    builtin(p)
                }
            };
            out.extend(regions.into_iter().map(|r| (p.page_index, r)));
        }
        Ok(out)
    }

    /// Proposes table regions. Unconfirmed detections are replaced; tables
    /// already past detection are kept and not proposed again.
    pub fn detect_tables(&self, user: &UserId, file_id: &str) -> Result<Vec<TableArtifact>> {
        let regions = self.detect_regions(user, file_id, RegionKind::Table)?;
        self.edit_doc(user, file_id, |cx| {
            let existing: Vec<_> = cx
                .doc
                .tables
                .iter()
                .map(|t| (t.table_id.clone(), t.page_index, t.region, t.stage == PipelineStage::Detected))
                .collect();
            let (keep, fresh) = merge_detections(&regions, &existing);
            cx.doc.tables.retain(|t| t.stage != PipelineStage::Detected || keep.contains(&t.table_id));
            for (page, region) in fresh {
                let id = cx.doc.fresh_id("t");
                cx.doc.tables.push(TableArtifact::detected(&id, cx.file_id, page, region, cx.now));
            }
            Ok(cx.doc.tables.clone())
        })
    }

    /// A table region drawn by the user.
    pub fn add_table(&self, user: &UserId, file_id: &str, page_index: usize, region: BBox) -> Result<TableArtifact> {
        self.edit_doc(user, file_id, |cx| {
            let page = page_box(cx.doc.page(page_index)?);
            check_region(&region, &page)?;
            let id = cx.doc.fresh_id("t");
            let t = TableArtifact::detected(&id, cx.file_id, page_index, region, cx.now);
            cx.doc.tables.push(t.clone());
            Ok(t)
        })
    }

    pub fn confirm_table_region(&self, user: &UserId, file_id: &str, table_id: &str, region: BBox) -> Result<TableArtifact> {
        self.edit_doc(user, file_id, |cx| {
            let page_index = cx.doc.table(table_id)?.page_index;
            let page = page_box(cx.doc.page(page_index)?);
            let now = cx.now;
            let adj = cx.doc.table_mut(table_id)?.confirm_region(region, &page, now)?;
            cx.note(adj);
            Ok(cx.doc.table(table_id)?.clone())
        })
    }

    pub fn propose_structure(&self, user: &UserId, file_id: &str, table_id: &str) -> Result<TableArtifact> {
        let cfg = self.settings.table;
        self.edit_doc(user, file_id, |cx| {
            let t = cx.doc.table(table_id)?;
            if t.stage != PipelineStage::RegionConfirmed {
                return Err(CoreError::InvalidStage { op: "recognize_structure", stage: t.stage.name() }.into());
            }
            let grid = recognize_structure(cx.doc.page(t.page_index)?, &t.region, &cfg)?;
            let now = cx.now;
            let t = cx.doc.table_mut(table_id)?;
            t.propose_structure(grid, now)?;
            Ok(t.clone())
        })
    }

    pub fn edit_structure(&self, user: &UserId, file_id: &str, table_id: &str, edit: &StructureEdit) -> Result<TableArtifact> {
        self.edit_doc(user, file_id, |cx| {
            let now = cx.now;
            let adj = cx.doc.table_mut(table_id)?.edit_structure(edit, now)?;
            cx.adjustments.push(adj);
            Ok(cx.doc.table(table_id)?.clone())
        })
    }

    pub fn confirm_structure(&self, user: &UserId, file_id: &str, table_id: &str) -> Result<TableArtifact> {
        self.edit_doc(user, file_id, |cx| {
            let now = cx.now;
            let t = cx.doc.table_mut(table_id)?;
            t.confirm_structure(now)?;
            Ok(t.clone())
        })
    }

    /// Reads cell texts from the text layer, with OCR for image-only pages
    /// when a client is configured.
    pub fn propose_content(&self, user: &UserId, file_id: &str, table_id: &str) -> Result<TableArtifact> {
        let Some(ocr) = self.adapters.ocr.as_deref() else {
            return self.edit_doc(user, file_id, |cx| {
                let t = cx.doc.table(table_id)?;
                let grid = stage_grid(t)?;
                let cells = recognize_content(cx.doc.page(t.page_index)?, &t.region, grid, None)?;
                let now = cx.now;
                let t = cx.doc.table_mut(table_id)?;
                t.propose_content(cells, now)?;
                Ok(t.clone())
            });
        };
        self.check_editor(user, file_id)?;
        let (page, table) = self.read_doc(file_id, |doc, _| {
            let t = doc.table(table_id)?;
            stage_grid(t)?;
            Ok((doc.page(t.page_index)?.clone(), t.clone()))
        })?;
        let pdf = self.file_bytes(file_id)?;
        let client = DocumentOcr { service: ocr, pdf: &pdf };
        let cells = recognize_content(&page, &table.region, table.grid.as_ref().expect("checked"), Some(&client))?;
        self.edit_doc(user, file_id, |cx| {
            let now = cx.now;
            let t = cx.doc.table_mut(table_id)?;
            if t.updated_at != table.updated_at || t.stage != table.stage {
                return Err(StoreError::Conflict(table_id.into()));
            }
            t.propose_content(cells, now)?;
            Ok(t.clone())
        })
    }

    pub fn edit_cell(&self, user: &UserId, file_id: &str, table_id: &str, row: usize, col: usize, text: &str) -> Result<TableArtifact> {
        self.edit_doc(user, file_id, |cx| {
            let now = cx.now;
            let adj = cx.doc.table_mut(table_id)?.edit_cell(row, col, text, now)?;
            cx.adjustments.push(adj);
            Ok(cx.doc.table(table_id)?.clone())
        })
    }

    /// Confirms the cell contents. A confirmed table keeps its place in the
    /// confirmation order when confirmed again.
    pub fn confirm_table(&self, user: &UserId, file_id: &str, table_id: &str) -> Result<TableArtifact> {
        self.edit_doc(user, file_id, |cx| {
            let now = cx.now;
            let t = cx.doc.tables.iter_mut().find(|t| t.table_id == table_id).ok_or_else(|| StoreError::UnknownTable(table_id.into()))?;
            let seq = if t.stage == PipelineStage::ContentProposed { *cx.confirmation + 1 } else { 0 };
            t.confirm_content(seq, now)?;
            if seq > 0 {
                *cx.confirmation = seq;
            }
            Ok(t.clone())
        })
    }

    pub fn revert_table(&self, user: &UserId, file_id: &str, table_id: &str, target: PipelineStage) -> Result<TableArtifact> {
        self.edit_doc(user, file_id, |cx| {
            let now = cx.now;
            let t = cx.doc.table_mut(table_id)?;
            t.revert(target, now)?;
            Ok(t.clone())
        })
    }

    /// The mapping integration will use for a confirmed table.
    pub fn column_mapping(&self, file_id: &str, table_id: &str) -> Result<ColumnMapping> {
        self.read_doc(file_id, |doc, project| {
            let header = project.header.as_ref().ok_or(CoreError::NoHeaderConfig)?;
            Ok(doc.effective_mapping(doc.table(table_id)?, header)?.0)
        })
    }

    /// Overrides the inferred column mapping; one entry per grid column.
    pub fn set_column_mapping(&self, user: &UserId, file_id: &str, table_id: &str, columns: Vec<Option<String>>) -> Result<ColumnMapping> {
        self.edit_doc(user, file_id, |cx| {
            let header = cx.project.header.as_ref().ok_or(CoreError::NoHeaderConfig)?;
            let t = cx.doc.table(table_id)?;
            let grid = t.grid.as_ref().ok_or(CoreError::InvalidStage { op: "set_column_mapping", stage: t.stage.name() })?;
            if columns.len() != grid.cols() {
                return Err(CoreError::Validation(format!("expected {} column entries, got {}", grid.cols(), columns.len())).into());
            }
            let mapping = ColumnMapping { table_id: table_id.into(), columns };
            mapping.validate(header)?;
            let before = cx.doc.effective_mapping(t, header).map(|m| m.0).ok();
            cx.adjustments.push(Adjustment::new(
                Module::Table,
                Some(table_id),
                "column_mapping",
                serde_json::to_value(&before).unwrap_or_default(),
                serde_json::to_value(&mapping).unwrap_or_default(),
            ));
            cx.doc.mappings.insert(table_id.into(), mapping.clone());
            Ok(mapping)
        })
    }

    // ---- maps ----

    pub fn list_maps(&self, file_id: &str) -> Result<Vec<MapArtifact>> {
        self.read_doc(file_id, |doc, _| Ok(doc.maps.clone()))
    }

    pub fn get_map(&self, file_id: &str, map_id: &str) -> Result<MapArtifact> {
        self.read_doc(file_id, |doc, _| doc.map(map_id).cloned())
    }

    pub fn detect_maps(&self, user: &UserId, file_id: &str) -> Result<Vec<MapArtifact>> {
        let regions = self.detect_regions(user, file_id, RegionKind::Map)?;
        self.edit_doc(user, file_id, |cx| {
            let existing: Vec<_> =
                cx.doc.maps.iter().map(|m| (m.map_id.clone(), m.page_index, m.region, m.stage == MapStage::Detected)).collect();
            let (keep, fresh) = merge_detections(&regions, &existing);
            cx.doc.maps.retain(|m| m.stage != MapStage::Detected || keep.contains(&m.map_id));
            for (page, region) in fresh {
                let id = cx.doc.fresh_id("m");
                cx.doc.maps.push(MapArtifact::detected(&id, cx.file_id, page, region, cx.now));
            }
            Ok(cx.doc.maps.clone())
        })
    }

    pub fn add_map(&self, user: &UserId, file_id: &str, page_index: usize, region: BBox) -> Result<MapArtifact> {
        self.edit_doc(user, file_id, |cx| {
            let page = page_box(cx.doc.page(page_index)?);
            check_region(&region, &page)?;
            let id = cx.doc.fresh_id("m");
            let m = MapArtifact::detected(&id, cx.file_id, page_index, region, cx.now);
            cx.doc.maps.push(m.clone());
            Ok(m)
        })
    }

    pub fn confirm_map_region(&self, user: &UserId, file_id: &str, map_id: &str, region: BBox) -> Result<MapArtifact> {
        self.edit_doc(user, file_id, |cx| {
            let page_index = cx.doc.map(map_id)?.page_index;
            let page = page_box(cx.doc.page(page_index)?);
            let now = cx.now;
            let adj = cx.doc.map_mut(map_id)?.confirm_region(region, &page, now)?;
            cx.note(adj);
            Ok(cx.doc.map(map_id)?.clone())
        })
    }

    pub fn propose_gridlines(&self, user: &UserId, file_id: &str, map_id: &str) -> Result<MapArtifact> {
        self.edit_doc(user, file_id, |cx| {
            let m = cx.doc.map(map_id)?;
            if m.stage != MapStage::RegionConfirmed {
                return Err(CoreError::InvalidStage { op: "detect_gridlines", stage: m.stage.name() }.into());
            }
            let lines = detect_gridlines(cx.doc.page(m.page_index)?, &m.region);
            let now = cx.now;
            let m = cx.doc.map_mut(map_id)?;
            m.propose_gridlines(lines, now)?;
            Ok(m.clone())
        })
    }

    pub fn edit_gridline(&self, user: &UserId, file_id: &str, map_id: &str, edit: &GridlineEdit) -> Result<MapArtifact> {
        self.edit_doc(user, file_id, |cx| {
            let now = cx.now;
            let adj = cx.doc.map_mut(map_id)?.edit_gridline(edit, now)?;
            cx.adjustments.push(adj);
            Ok(cx.doc.map(map_id)?.clone())
        })
    }

    /// Fits the calibration from the gridlines and confirms the grid.
    pub fn fit_map(&self, user: &UserId, file_id: &str, map_id: &str) -> Result<Calibration> {
        let tol = self.settings.residual_tolerance;
        self.edit_doc(user, file_id, |cx| {
            let now = cx.now;
            Ok(cx.doc.map_mut(map_id)?.confirm_grid(tol, now)?)
        })
    }

    pub fn confirm_calibration(&self, user: &UserId, file_id: &str, map_id: &str) -> Result<MapArtifact> {
        self.edit_doc(user, file_id, |cx| {
            let now = cx.now;
            let m = cx.doc.map_mut(map_id)?;
            m.confirm_calibration(now)?;
            Ok(m.clone())
        })
    }

    /// Marks a point given in region-relative pixels.
    pub fn mark_point(&self, user: &UserId, file_id: &str, map_id: &str, pixel: Point) -> Result<MarkedPoint> {
        self.edit_doc(user, file_id, |cx| {
            let now = cx.now;
            Ok(cx.doc.map_mut(map_id)?.mark_point(pixel, now)?)
        })
    }

    pub fn attach_point(&self, user: &UserId, file_id: &str, map_id: &str, point_id: &str, key: Option<&str>) -> Result<MapArtifact> {
        self.edit_doc(user, file_id, |cx| {
            let now = cx.now;
            let adj = cx.doc.map_mut(map_id)?.attach_point(point_id, key, now)?;
            cx.adjustments.push(adj);
            Ok(cx.doc.map(map_id)?.clone())
        })
    }

    pub fn delete_point(&self, user: &UserId, file_id: &str, map_id: &str, point_id: &str) -> Result<MarkedPoint> {
        self.edit_doc(user, file_id, |cx| {
            let now = cx.now;
            Ok(cx.doc.map_mut(map_id)?.delete_point(point_id, now)?)
        })
    }

    pub fn revert_map(&self, user: &UserId, file_id: &str, map_id: &str, target: MapStage) -> Result<MapArtifact> {
        self.edit_doc(user, file_id, |cx| {
            let now = cx.now;
            let m = cx.doc.map_mut(map_id)?;
            m.revert(target, now)?;
            Ok(m.clone())
        })
    }

    // ---- integration ----

    /// Builds and stores the document dataset.
    pub fn integrate_document(&self, file_id: &str) -> Result<DocumentDataset> {
        self.write(|inner, _| {
            let ds = document_dataset(inner, file_id, &self.settings.integration)?;
            inner.state.documents.get_mut(file_id).expect("checked").dataset = Some(ds.clone());
            Ok(ds)
        })
    }

    /// Rebuilds every document with confirmed content, in upload order,
    /// stores the document datasets and concatenates them under Reference
    /// IDs. Runs on one consistent snapshot.
    pub fn integrate_project(&self, project_id: &str) -> Result<ProjectDataset> {
        self.write(|inner, _| {
            let (docs, ds) = project_dataset(inner, project_id, &self.settings.integration)?;
            for (id, d) in docs {
                inner.state.documents.get_mut(&id).expect("built from state").dataset = Some(d);
            }
            Ok(ds)
        })
    }

    /// Same rows as [`Store::integrate_project`], serialized, without
    /// touching stored state.
    pub fn export_project(&self, project_id: &str, format: ExportFormat) -> Result<Vec<u8>> {
        let ds = self.read(|inner, _| Ok(project_dataset(inner, project_id, &self.settings.integration)?.1))?;
        Ok(export_project(&ds, format)?)
    }

    pub fn export_document(&self, file_id: &str, format: ExportFormat) -> Result<Vec<u8>> {
        let ds = self.read(|inner, _| document_dataset(inner, file_id, &self.settings.integration))?;
        Ok(export_document(&ds, format)?)
    }
}

fn document_dataset(inner: &Inner, file_id: &str, opts: &IntegrationOptions) -> Result<DocumentDataset> {
    let rec = inner.file(file_id)?;
    let header = inner.project(&rec.project_id)?.header.as_ref();
    let doc = inner.state.documents.get(file_id).ok_or_else(|| StoreError::NotParsed(file_id.into()))?;
    Ok(doc.build_dataset(file_id, header, opts)?)
}

type Built = (Vec<(String, DocumentDataset)>, ProjectDataset);

fn project_dataset(inner: &Inner, project_id: &str, opts: &IntegrationOptions) -> Result<Built> {
    let header = inner.project(project_id)?.header.as_ref().ok_or(CoreError::NoHeaderConfig)?;
    let mut built = Vec::new();
    for f in inner.files_sorted(|f| f.project_id == project_id) {
        let Some(doc) = inner.state.documents.get(&f.file_id).filter(|d| d.has_confirmed_content()) else { continue };
        built.push((f.file_id.clone(), doc.build_dataset(&f.file_id, Some(header), opts)?, &doc.meta));
    }
    let refs: Vec<(&DocumentDataset, &MetaRecord)> = built.iter().map(|(_, d, m)| (d, *m)).collect();
    let ds = integrate_project(&refs, header)?;
    Ok((built.into_iter().map(|(id, d, _)| (id, d)).collect(), ds))
}

fn check_region(region: &BBox, page: &BBox) -> Result<(), CoreError> {
    if !region.is_finite() || region.width() <= 0.0 || region.height() <= 0.0 {
        return Err(CoreError::EmptyRegion);
    }
    if !page.contains(region) {
        return Err(CoreError::RegionOutOfPage);
    }
    Ok(())
}

fn stage_grid(t: &TableArtifact) -> Result<&GridStructure, CoreError> {
    if t.stage != PipelineStage::StructureConfirmed {
        return Err(CoreError::InvalidStage { op: "recognize_content", stage: t.stage.name() });
    }
    Ok(t.grid.as_ref().expect("grid present from StructureProposed"))
}
