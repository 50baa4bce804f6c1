use docmine_core::meta::{vote_merge, MetaFields, MetaRecord, SourceCandidate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use super::{squash, Rng};

const TITLES: &[&str] = &[
    "Zircon ages of Veracruz beaches",
    "zircon  AGES of veracruz Beaches",
    " Zircon ages of Veracruz beaches ",
    "Beach sands of the Gulf",
    "Café geology",
    "Cafe\u{301} GEOLOGY",
    "",
    "   ",
];
const VENUES: &[&str] = &["J. Geol.", "j. geol.", "Chem. Geol.", "Lithos", "LITHOS", ""];
const DOIS: &[&str] = &["10.1000/abc", "10.1000/ABC", "10.2000/xyz", "10.3000/q"];
const ABSTRACTS: &[&str] = &["We date zircon.", "we  date zircon.", "Sands were sampled.", ""];
const YEARS: &[i32] = &[1999, 2001, 2001, 2020, 1400, 2200];
const NAMES: &[&str] = &["Ana Ruiz", "ana  ruiz", "B. Tanaka", "Chen Li", "", "José Pérez", "Jose\u{301} Pe\u{301}rez"];

/// NFC for the only decomposed sequences the generator emits, then
/// whitespace collapse.
fn stored(s: &str) -> String {
    squash(&s.replace("e\u{301}", "é"))
}

fn key(s: &str) -> String {
    stored(s).to_lowercase()
}

fn pick_opt<T: Clone>(rng: &mut Rng, pool: &[T]) -> Option<T> {
    rng.random_bool(0.7).then(|| pool.choose(rng).expect("non-empty pool").clone())
}

pub fn random_candidates(rng: &mut Rng) -> Vec<SourceCandidate> {
    let n = rng.random_range(1..=5);
    let mut priorities: Vec<i32> = (-3..12).collect();
    priorities.shuffle(rng);
    (0..n)
        .map(|i| {
            let authors = rng.random_bool(0.7).then(|| {
                let k = rng.random_range(0..=3);
                (0..k).map(|_| NAMES.choose(rng).unwrap().to_string()).collect()
            });
            SourceCandidate {
                source_id: format!("s{i}"),
                priority: priorities[i],
                fields: MetaFields {
                    title: pick_opt(rng, TITLES).map(String::from),
                    authors,
                    venue: pick_opt(rng, VENUES).map(String::from),
                    year: pick_opt(rng, YEARS),
                    doi: pick_opt(rng, DOIS).map(String::from),
                    abstract_text: pick_opt(rng, ABSTRACTS).map(String::from),
                },
            }
        })
        .collect()
}

/// For every supporter, count the supporters sharing its key and the best
/// priority among them; the winner has the largest count, then the best
/// priority. Its value is the best-priority supporter's.
fn exhaustive<K: PartialEq, V: Clone>(supporters: &[(i32, K, V)]) -> Option<V> {
    let mut best: Option<(usize, i32, V)> = None;
    for (_, k, _) in supporters {
        let same: Vec<&(i32, K, V)> = supporters.iter().filter(|(_, k2, _)| k2 == k).collect();
        let count = same.len();
        let top = same.iter().min_by_key(|(p, _, _)| *p).expect("contains itself");
        let better = match &best {
            None => true,
            Some((c, p, _)) => count > *c || (count == *c && top.0 < *p),
        };
        if better {
            best = Some((count, top.0, top.2.clone()));
        }
    }
    best.map(|(_, _, v)| v)
}

fn text_field(cands: &[SourceCandidate], get: impl Fn(&MetaFields) -> Option<&String>) -> Option<String> {
    let supporters: Vec<(i32, String, String)> = cands
        .iter()
        .filter_map(|c| get(&c.fields).map(|v| (c.priority, key(v), stored(v))))
        .filter(|(_, _, v)| !v.is_empty())
        .collect();
    exhaustive(&supporters)
}

pub fn oracle(cands: &[SourceCandidate]) -> MetaRecord {
    let authors: Vec<(i32, Vec<String>, Vec<String>)> = cands
        .iter()
        .filter_map(|c| {
            let list: Vec<String> = c.fields.authors.as_ref()?.iter().map(|a| stored(a)).filter(|a| !a.is_empty()).collect();
            if list.is_empty() {
                return None;
            }
            Some((c.priority, list.iter().map(|a| a.to_lowercase()).collect(), list))
        })
        .collect();
    let years: Vec<(i32, i32, i32)> = cands
        .iter()
        .filter_map(|c| c.fields.year.filter(|y| (1500..=2100).contains(y)).map(|y| (c.priority, y, y)))
        .collect();
    MetaRecord {
        title: text_field(cands, |f| f.title.as_ref()).unwrap_or_default(),
        authors: exhaustive(&authors).unwrap_or_default(),
        venue: text_field(cands, |f| f.venue.as_ref()).unwrap_or_default(),
        year: exhaustive(&years),
        doi: text_field(cands, |f| f.doi.as_ref()),
        abstract_text: text_field(cands, |f| f.abstract_text.as_ref()),
        edited_by_user: false,
    }
}

pub fn check(seed: u64) -> Result<(), String> {
    let mut rng = super::rng(seed);
    let cands = random_candidates(&mut rng);
    let got = vote_merge(&cands).map_err(|e| e.to_string())?;
    let want = oracle(&cands);
    if got != want {
        return Err(format!("{cands:?}\n got {got:?}\nwant {want:?}"));
    }
    Ok(())
}
