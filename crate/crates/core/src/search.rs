//! In-memory inverted index over document metadata.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use unicode_normalization::UnicodeNormalization;

use crate::meta::MetaRecord;
use crate::time::Timestamp;

/// Lower-cased NFC alphanumeric words.
pub fn tokenize(text: &str) -> Vec<String> {
    let nfc: String = text.nfc().collect();
    nfc.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

fn record_tokens(meta: &MetaRecord) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    out.extend(tokenize(&meta.title));
    for a in &meta.authors {
        out.extend(tokenize(a));
    }
    out.extend(tokenize(&meta.venue));
    if let Some(y) = meta.year {
        out.insert(y.to_string());
    }
    if let Some(a) = &meta.abstract_text {
        out.extend(tokenize(a));
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct SearchIndex {
    postings: BTreeMap<String, BTreeSet<String>>,
    docs: BTreeMap<String, (BTreeSet<String>, Timestamp)>,
}

impl SearchIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Indexes (or re-indexes) a file.
    pub fn upsert(&mut self, file_id: &str, meta: &MetaRecord, updated_at: Timestamp) {
        self.remove(file_id);
        let tokens = record_tokens(meta);
        for t in &tokens {
            self.postings.entry(t.clone()).or_default().insert(file_id.into());
        }
        self.docs.insert(file_id.into(), (tokens, updated_at));
    }

    pub fn touch(&mut self, file_id: &str, updated_at: Timestamp) {
        if let Some(entry) = self.docs.get_mut(file_id) {
            entry.1 = updated_at;
        }
    }

    pub fn remove(&mut self, file_id: &str) {
        if let Some((tokens, _)) = self.docs.remove(file_id) {
            for t in tokens {
                if let Some(set) = self.postings.get_mut(&t) {
                    set.remove(file_id);
                    if set.is_empty() {
                        self.postings.remove(&t);
                    }
                }
            }
        }
    }

    /// File ids ranked by the number of distinct query tokens they contain,
    /// then most recently updated, then id. An empty query lists every file.
    pub fn search(&self, query: &str) -> Vec<String> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut hits: BTreeMap<&str, usize> = BTreeMap::new();
        if terms.is_empty() {
            hits.extend(self.docs.keys().map(|k| (k.as_str(), 0)));
        }
        for t in &terms {
            for id in self.postings.get(t).into_iter().flatten() {
                *hits.entry(id.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize, Timestamp)> =
            hits.into_iter().map(|(id, n)| (id, n, self.docs[id].1)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(b.0)));
        ranked.into_iter().map(|(id, _, _)| id.into()).collect()
    }
}
