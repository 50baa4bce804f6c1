use docmine_core::text::{annotate, CompiledLabel, Gazetteer, Matcher, SpanMatch};
use rand::seq::IndexedRandom;
use rand::Rng as _;

use super::Rng;

const WORDS: &[&str] = &["Palma", "Sola", "Palma Sola", "PalmaSola", "Río", "Pb", "Pb-206", "zircon", "U-Pb", "é", "°N", "ab", "aba"];
const GLUE: &[&str] = &[" ", " ", ", ", "", "-", " (", ") ", "\u{a0}"];
const TERMS: &[&str] = &["Palma", "Palma Sola", "Sola", "Río", "Pb", "Pb-206", "U-Pb", "ab", "aba", "b", "é", "°N"];

pub struct Case {
    pub sections: Vec<String>,
    pub labels: Vec<(String, Vec<String>)>,
}

pub fn random_case(rng: &mut Rng) -> Case {
    let sections = (0..rng.random_range(1..=3))
        .map(|_| {
            let mut s = String::new();
            for _ in 0..rng.random_range(0..=12) {
                s.push_str(WORDS.choose(rng).unwrap());
                s.push_str(GLUE.choose(rng).unwrap());
            }
            s
        })
        .collect();
    let labels = (0..rng.random_range(1..=3))
        .map(|i| {
            let terms = (0..rng.random_range(1..=3)).map(|_| TERMS.choose(rng).unwrap().to_string()).collect();
            (format!("label{i}"), terms)
        })
        .collect();
    Case { sections, labels }
}

pub fn compile(case: &Case) -> Vec<CompiledLabel<'static>> {
    case.labels
        .iter()
        .map(|(label, terms)| CompiledLabel {
            label: label.clone(),
            matchers: vec![Box::new(Gazetteer::new(terms.clone()).unwrap()) as Box<dyn Matcher>],
        })
        .collect()
}

/// Every (start, term) pair is tried; a hit counts when it is not glued to a
/// letter or digit on either side. Hits are then taken greedily: smallest
/// start, longest among those, resuming after the chosen end.
pub fn oracle(case: &Case) -> Vec<SpanMatch> {
    let mut out = Vec::new();
    for (si, section) in case.sections.iter().enumerate() {
        let hay: Vec<char> = section.chars().collect();
        for (label, terms) in &case.labels {
            let mut hits: Vec<(usize, usize)> = Vec::new();
            for start in 0..hay.len() {
                for term in terms {
                    let t: Vec<char> = term.chars().collect();
                    let end = start + t.len();
                    if end > hay.len() || hay[start..end] != t[..] {
                        continue;
                    }
                    let glued_left = start > 0 && hay[start - 1].is_alphanumeric() && t[0].is_alphanumeric();
                    let glued_right = end < hay.len() && hay[end].is_alphanumeric() && t[t.len() - 1].is_alphanumeric();
                    if !glued_left && !glued_right {
                        hits.push((start, end));
                    }
                }
            }
            let mut pos = 0;
            loop {
                let next = hits.iter().filter(|h| h.0 >= pos).min_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
                let Some(&(s, e)) = next else { break };
                out.push(SpanMatch {
                    section_index: si,
                    start: s,
                    end: e,
                    label: label.clone(),
                    text: hay[s..e].iter().collect(),
                });
                pos = e;
            }
        }
    }
    out
}

pub fn check(seed: u64) -> Result<(), String> {
    let mut rng = super::rng(seed);
    let case = random_case(&mut rng);
    let got = annotate(&case.sections, &compile(&case));
    let want = oracle(&case);
    if got != want {
        return Err(format!("sections {:?} labels {:?}\n got {got:?}\nwant {want:?}", case.sections, case.labels));
    }
    for m in &got {
        let text: String = case.sections[m.section_index].chars().skip(m.start).take(m.end - m.start).collect();
        if text != m.text {
            return Err(format!("offsets {}..{} do not cover {:?}", m.start, m.end, m.text));
        }
    }
    Ok(())
}
