//! Text sections and rule-based entity pre-annotation.
//!
//! Rules come in two kinds: regular-expression patterns (compiled outside this
//! crate, behind [`Matcher`]) and gazetteers (exact term lists, matched here).
//! Within one label, matches are taken leftmost-longest and never overlap;
//! different labels may overlap freely.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::geom::{group_lines, BBox, PageModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// A regular expression.
    Pattern(String),
    /// Literal terms.
    Gazetteer(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub label: String,
    #[serde(default)]
    pub rules: Vec<Rule>,
    #[serde(default = "default_true")]
    pub visible: bool,
    #[serde(default)]
    pub linked_field: Option<String>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanSource {
    Auto,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub span_id: String,
    pub doc_id: String,
    pub section_index: usize,
    /// Character offsets into the section, end exclusive.
    pub start: usize,
    pub end: usize,
    pub label: String,
    pub text: String,
    pub source: SpanSource,
    #[serde(default)]
    pub linked_field: Option<String>,
    /// Set when a re-parse changed the section so the offsets no longer
    /// cover `text`.
    #[serde(default)]
    pub stale: bool,
}

/// A rule match before it is persisted as a span.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SpanMatch {
    pub section_index: usize,
    pub start: usize,
    pub end: usize,
    pub label: String,
    pub text: String,
}

/// Leftmost search for one rule. Offsets are byte offsets into `haystack`;
/// the match must start at or after `from`.
pub trait Matcher {
    fn find_at(&self, haystack: &str, from: usize) -> Option<(usize, usize)>;
}

/// Exact-term matcher. A term only matches where it is not glued to
/// surrounding alphanumeric characters.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    terms: Vec<String>,
}

impl Gazetteer {
    pub fn new<I, S>(terms: I) -> Result<Self, CoreError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let terms: Vec<String> = terms.into_iter().map(Into::into).collect();
        if terms.iter().any(|t| t.trim().is_empty()) {
            return Err(CoreError::InvalidRule("gazetteer terms must not be empty".into()));
        }
        Ok(Self { terms })
    }
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(char::is_alphanumeric)
}

fn boundary_ok(hay: &str, start: usize, end: usize) -> bool {
    let before = hay[..start].chars().next_back();
    let after = hay[end..].chars().next();
    let first = hay[start..end].chars().next();
    let last = hay[start..end].chars().next_back();
    !(is_word_char(before) && is_word_char(first)) && !(is_word_char(after) && is_word_char(last))
}

impl Matcher for Gazetteer {
    fn find_at(&self, hay: &str, from: usize) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        for term in &self.terms {
            let mut pos = from;
            while let Some(off) = hay.get(pos..).and_then(|h| h.find(term.as_str())) {
                let s = pos + off;
                let e = s + term.len();
                if best.is_some_and(|(bs, _)| s > bs) {
                    break;
                }
                if boundary_ok(hay, s, e) {
                    if best.is_none_or(|(bs, be)| s < bs || (s == bs && e > be)) {
                        best = Some((s, e));
                    }
                    break;
                }
                pos = s + hay[s..].chars().next().map_or(1, char::len_utf8);
            }
        }
        best
    }
}

/// Leftmost-longest, non-overlapping scan of one label's matchers. Returns
/// byte ranges.
pub fn scan_label(hay: &str, matchers: &[Box<dyn Matcher + '_>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos <= hay.len() {
        let best = matchers
            .iter()
            .filter_map(|m| m.find_at(hay, pos))
            .min_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        match best {
            None => break,
            Some((s, e)) if e <= s => {
                pos = s + hay[s..].chars().next().map_or(1, char::len_utf8);
            }
            Some((s, e)) => {
                out.push((s, e));
                pos = e;
            }
        }
    }
    out
}

pub fn byte_to_char(hay: &str, byte: usize) -> usize {
    hay[..byte].chars().count()
}

/// Substring by character offsets.
pub fn char_slice(hay: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut idx = hay.char_indices().map(|(i, _)| i).chain(core::iter::once(hay.len()));
    let s = idx.nth(start)?;
    let e = if end == start { s } else { idx.nth(end - start - 1)? };
    Some(&hay[s..e])
}

/// A label with its compiled rules.
pub struct CompiledLabel<'a> {
    pub label: String,
    pub matchers: Vec<Box<dyn Matcher + 'a>>,
}

/// Runs every label over every section.
pub fn annotate(sections: &[String], labels: &[CompiledLabel<'_>]) -> Vec<SpanMatch> {
    let mut out = Vec::new();
    for (section_index, hay) in sections.iter().enumerate() {
        for label in labels {
            for (s, e) in scan_label(hay, &label.matchers) {
                out.push(SpanMatch {
                    section_index,
                    start: byte_to_char(hay, s),
                    end: byte_to_char(hay, e),
                    label: label.label.clone(),
                    text: hay[s..e].into(),
                });
            }
        }
    }
    out
}

/// Reading-order text sections. Prose lines (no column-sized gaps) group into
/// a section while they share a font size and sit within half a font size of
/// each other; anything inside `exclude` (tables, map margins) is skipped and
/// also breaks the current section.
pub fn extract_sections(pages: &[PageModel], exclude: &[(usize, BBox)]) -> Vec<String> {
    let mut sections = Vec::new();
    for page in pages {
        let zones: Vec<&BBox> = exclude
            .iter()
            .filter(|(p, _)| *p == page.page_index)
            .map(|(_, b)| b)
            .collect();
        let lines = group_lines(
            page.text_runs
                .iter()
                .filter(|r| !zones.iter().any(|z| z.contains_point(r.bbox.center()))),
        );
        let mut current: Option<(String, f64, f64)> = None; // (text, font size, bottom)
        for line in &lines {
            if !line.is_prose() {
                if let Some((text, ..)) = current.take() {
                    sections.push(text);
                }
                continue;
            }
            let size = line.font_size();
            match current.as_mut() {
                Some((text, cur_size, bottom))
                    if (*cur_size - size).abs() < 0.01 && line.bbox.y0 - *bottom <= 0.5 * size =>
                {
                    text.push(' ');
                    text.push_str(&line.text());
                    *bottom = line.bbox.y1;
                }
                _ => {
                    if let Some((text, ..)) = current.take() {
                        sections.push(text);
                    }
                    current = Some((line.text(), size, line.bbox.y1));
                }
            }
        }
        if let Some((text, ..)) = current {
            sections.push(text);
        }
    }
    sections
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::TextRun;
    use alloc::vec;

    fn gaz(terms: &[&str]) -> Box<dyn Matcher> {
        Box::new(Gazetteer::new(terms.iter().copied()).unwrap())
    }

    #[test]
    fn gazetteer_matches_exact_term() {
        let labels = [CompiledLabel { label: "basin".into(), matchers: vec![gaz(&["Tethys"])] }];
        let sections = vec![String::from("the central-western Tethys ocean")];
        let spans = annotate(&sections, &labels);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].text, "Tethys");
        assert_eq!(char_slice(&sections[0], spans[0].start, spans[0].end), Some("Tethys"));
    }

    #[test]
    fn gazetteer_respects_word_edges() {
        let g = Gazetteer::new(["Sola"]).unwrap();
        assert_eq!(g.find_at("Solar Sola", 0), Some((6, 10)));
        assert_eq!(g.find_at("Solar", 0), None);
    }

    #[test]
    fn within_label_overlaps_resolve_leftmost_longest() {
        let m = vec![gaz(&["Palma", "Palma Sola"]), gaz(&["Sola beach"])];
        assert_eq!(scan_label("at Palma Sola beach", &m), vec![(3, 13)]);
    }

    #[test]
    fn empty_config_yields_nothing() {
        assert!(annotate(&[String::from("text")], &[]).is_empty());
    }

    #[test]
    fn offsets_are_characters() {
        let labels = [CompiledLabel { label: "x".into(), matchers: vec![gaz(&["Pb"])] }];
        let sections = vec![String::from("U–Pb ages")];
        let spans = annotate(&sections, &labels);
        assert_eq!((spans[0].start, spans[0].end), (2, 4));
    }

    #[test]
    fn char_slice_bounds() {
        assert_eq!(char_slice("añb", 1, 2), Some("ñ"));
        assert_eq!(char_slice("añb", 0, 3), Some("añb"));
        assert_eq!(char_slice("añb", 2, 4), None);
        assert_eq!(char_slice("añb", 3, 3), Some(""));
    }

    #[test]
    fn sections_split_on_gap_and_font() {
        let mut page = PageModel::empty(0, 600.0, 800.0);
        let mut add = |t: &str, y: f64, size: f64| {
            page.text_runs.push(TextRun {
                text: t.into(),
                bbox: BBox::new(50.0, y, 300.0, y + size),
                font_size: size,
            })
        };
        add("Heading", 40.0, 12.0);
        add("first line", 60.0, 10.0);
        add("second line", 72.0, 10.0);
        add("new para", 100.0, 10.0);
        add("inside table", 200.0, 10.0);
        let sections = extract_sections(&[page], &[(0, BBox::new(0.0, 190.0, 600.0, 220.0))]);
        assert_eq!(sections, vec!["Heading", "first line second line", "new para"]);
        assert!(extract_sections(&[], &[]).is_empty());
    }
}
