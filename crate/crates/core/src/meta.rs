//! Article metadata: the built-in first-page heuristic and the per-field
//! voting merge across independent extractors.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::CoreError;
use crate::geom::{group_lines, normalize_whitespace, PageModel, TextLine};

pub const YEAR_RANGE: core::ops::RangeInclusive<i32> = 1500..=2100;

/// Priority of the built-in heuristic extractor (most trusted).
pub const HEURISTIC_PRIORITY: i32 = 0;
pub const HEURISTIC_SOURCE: &str = "heuristic";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub title: String,
    pub authors: Vec<String>,
    pub venue: String,
    pub year: Option<i32>,
    pub doi: Option<String>,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    pub edited_by_user: bool,
}

impl MetaRecord {
    pub fn validate(&self) -> Result<(), CoreError> {
        if normalize_whitespace(&self.title).is_empty() {
            return Err(CoreError::Validation("title must not be empty".into()));
        }
        if let Some(y) = self.year {
            if !YEAR_RANGE.contains(&y) {
                return Err(CoreError::Validation(alloc::format!("year {y} out of range")));
            }
        }
        if self.authors.iter().any(|a| normalize_whitespace(a).is_empty()) {
            return Err(CoreError::Validation("author names must not be empty".into()));
        }
        Ok(())
    }

    /// The record as a lone voting candidate.
    pub fn as_fields(&self) -> MetaFields {
        MetaFields {
            title: Some(self.title.clone()).filter(|t| !t.is_empty()),
            authors: Some(self.authors.clone()).filter(|a| !a.is_empty()),
            venue: Some(self.venue.clone()).filter(|v| !v.is_empty()),
            year: self.year,
            doi: self.doi.clone(),
            abstract_text: self.abstract_text.clone(),
        }
    }
}

/// A partial record as produced by one extractor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetaFields {
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub authors: Option<Vec<String>>,
    #[serde(default)]
    pub venue: Option<String>,
    #[serde(default)]
    pub year: Option<i32>,
    #[serde(default)]
    pub doi: Option<String>,
    #[serde(default, rename = "abstract")]
    pub abstract_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCandidate {
    pub source_id: String,
    /// Lower is more trusted. Unique within one extraction batch.
    pub priority: i32,
    pub fields: MetaFields,
}

/// Comparison key: NFC, whitespace collapsed, lower-cased.
pub fn comparison_key(value: &str) -> String {
    let nfc: String = value.nfc().collect();
    normalize_whitespace(&nfc).to_lowercase()
}

/// Stored form: NFC with whitespace collapsed, original casing kept.
fn stored_form(value: &str) -> String {
    let nfc: String = value.nfc().collect();
    normalize_whitespace(&nfc)
}

/// Picks the winning value among `(priority, key, value)` entries: the key
/// with the most supporters, ties broken by the lowest priority among each
/// key's supporters. The stored value is that of the most trusted supporter
/// of the winning key.
fn vote<K: Ord + Clone, V: Clone>(entries: &[(i32, K, V)]) -> Option<V> {
    // key -> (count, best priority, value of best-priority supporter)
    let mut tally: BTreeMap<K, (usize, i32, V)> = BTreeMap::new();
    for (prio, key, value) in entries {
        tally
            .entry(key.clone())
            .and_modify(|(count, best, v)| {
                *count += 1;
                if *prio < *best {
                    *best = *prio;
                    *v = value.clone();
                }
            })
            .or_insert((1, *prio, value.clone()));
    }
    tally
        .into_values()
        .min_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)))
        .map(|(_, _, v)| v)
}

fn text_entries<F>(candidates: &[SourceCandidate], get: F) -> Vec<(i32, String, String)>
where
    F: Fn(&MetaFields) -> Option<&String>,
{
    candidates
        .iter()
        .filter_map(|c| {
            let v = stored_form(get(&c.fields)?);
            (!v.is_empty()).then(|| (c.priority, comparison_key(&v), v))
        })
        .collect()
}

/// Per-field plurality vote with priority tie-break. Author lists vote as
/// whole lists.
pub fn vote_merge(candidates: &[SourceCandidate]) -> Result<MetaRecord, CoreError> {
    if candidates.is_empty() {
        return Err(CoreError::NoCandidates);
    }
    let authors: Vec<(i32, Vec<String>, Vec<String>)> = candidates
        .iter()
        .filter_map(|c| {
            let list: Vec<String> = c
                .fields
                .authors
                .as_ref()?
                .iter()
                .map(|a| stored_form(a))
                .filter(|a| !a.is_empty())
                .collect();
            (!list.is_empty()).then(|| {
                let key = list.iter().map(|a| comparison_key(a)).collect();
                (c.priority, key, list)
            })
        })
        .collect();
    let years: Vec<(i32, i32, i32)> = candidates
        .iter()
        .filter_map(|c| c.fields.year.filter(|y| YEAR_RANGE.contains(y)).map(|y| (c.priority, y, y)))
        .collect();

    Ok(MetaRecord {
        title: vote(&text_entries(candidates, |f| f.title.as_ref())).unwrap_or_default(),
        authors: vote(&authors).unwrap_or_default(),
        venue: vote(&text_entries(candidates, |f| f.venue.as_ref())).unwrap_or_default(),
        year: vote(&years),
        doi: vote(&text_entries(candidates, |f| f.doi.as_ref())),
        abstract_text: vote(&text_entries(candidates, |f| f.abstract_text.as_ref())),
        edited_by_user: false,
    })
}

/// First plausible four-digit year token.
pub fn find_year(text: &str) -> Option<i32> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i - start == 4 {
                let y: i32 = text[start..i].parse().ok()?;
                if YEAR_RANGE.contains(&y) {
                    return Some(y);
                }
            }
        } else {
            i += 1;
        }
    }
    None
}

/// First DOI-shaped token (`10.<registrant>/<suffix>`).
pub fn find_doi(text: &str) -> Option<String> {
    text.split_whitespace().find_map(|tok| {
        let start = tok.find("10.")?;
        let tok = tok[start..].trim_end_matches(['.', ',', ';', ')', ']']);
        let (prefix, suffix) = tok.split_once('/')?;
        let registrant = &prefix[3..];
        (registrant.len() >= 4 && registrant.bytes().all(|b| b.is_ascii_digit() || b == b'.') && !suffix.is_empty())
            .then(|| tok.to_string())
    })
}

fn split_authors(line: &str) -> Vec<String> {
    let mut names = Vec::new();
    for part in line.split([',', ';']) {
        for name in part.split(" and ") {
            let name = normalize_whitespace(name.trim_matches(|c: char| c.is_ascii_digit() || c == '*'));
            if !name.is_empty() {
                names.push(name);
            }
        }
    }
    names
}

fn abstract_heading(text: &str) -> Option<&str> {
    let lower = text.to_lowercase();
    if !lower.starts_with("abstract") {
        return None;
    }
    Some(text["abstract".len()..].trim_start_matches([':', '.', ' ', '-']).trim())
}

/// Built-in extractor over the first page: the largest-font line block is the
/// title, lines between it and the abstract heading are authors, the year is
/// the first plausible four-digit token.
pub fn heuristic_candidate(pages: &[PageModel]) -> SourceCandidate {
    let mut fields = MetaFields::default();
    if let Some(page) = pages.first() {
        let lines = group_lines(&page.text_runs);
        let max_size = lines.iter().map(|l| l.font_size()).fold(0.0, f64::max);
        if let Some(first) = lines.iter().position(|l| (l.font_size() - max_size).abs() < 0.01) {
            let mut last = first;
            while last + 1 < lines.len() && (lines[last + 1].font_size() - max_size).abs() < 0.01 {
                last += 1;
            }
            let title: Vec<String> = lines[first..=last].iter().map(|l| l.text()).collect();
            fields.title = Some(normalize_whitespace(&title.join(" ")));

            if let Some(abs_idx) = (last + 1..lines.len()).find(|&i| abstract_heading(&lines[i].text()).is_some()) {
                // A line carrying a year is the venue line, not an author line.
                let mut authors = Vec::new();
                for line in &lines[last + 1..abs_idx] {
                    let text = line.text();
                    match find_year(&text) {
                        Some(y) if fields.venue.is_none() => {
                            let year = y.to_string();
                            let venue = text[..text.find(year.as_str()).unwrap_or(text.len())]
                                .trim_end_matches([',', ' ', '(', ';']);
                            if !venue.is_empty() {
                                fields.venue = Some(normalize_whitespace(venue));
                            }
                        }
                        Some(_) => {}
                        None => authors.extend(split_authors(&text)),
                    }
                }
                if !authors.is_empty() {
                    fields.authors = Some(authors);
                }
                let heading = lines[abs_idx].text();
                let mut body = String::from(abstract_heading(&heading).unwrap_or_default());
                let size = lines.get(abs_idx + 1).map(|l| l.font_size()).unwrap_or(0.0);
                let mut prev: Option<&TextLine> = None;
                for line in &lines[abs_idx + 1..] {
                    let gap = prev.map_or(0.0, |p| line.bbox.y0 - p.bbox.y1);
                    if (line.font_size() - size).abs() > 0.01 || gap > 0.5 * size {
                        break;
                    }
                    if !body.is_empty() {
                        body.push(' ');
                    }
                    body.push_str(&line.text());
                    prev = Some(line);
                }
                let body = normalize_whitespace(&body);
                if !body.is_empty() {
                    fields.abstract_text = Some(body);
                }
            }
        }
        let page_text: Vec<String> = lines.iter().map(|l| l.text()).collect();
        let page_text = page_text.join("\n");
        let after_title = fields
            .title
            .as_ref()
            .and_then(|t| page_text.find(t.as_str()).map(|i| &page_text[i + t.len()..]))
            .unwrap_or(&page_text);
        fields.year = find_year(after_title).or_else(|| find_year(&page_text));
        fields.doi = find_doi(&page_text);
    }
    SourceCandidate {
        source_id: HEURISTIC_SOURCE.into(),
        priority: HEURISTIC_PRIORITY,
        fields,
    }
}
