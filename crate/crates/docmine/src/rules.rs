//! Compilation of label rules into matchers.
//!
//! Pattern rules use ordinary regular-expression syntax: literals, character
//! classes, quantifiers, alternation, groups and the `^`/`$`/`\b` anchors.
//! Matching is leftmost-longest, so `Pb|Pb-206` matches all of `Pb-206`.

use docmine_core::text::{CompiledLabel, Gazetteer, LabelConfig, Matcher, Rule};
use docmine_core::CoreError;
use regex_automata::{meta, Anchored, Input, MatchKind};

/// A compiled pattern rule.
#[derive(Debug, Clone)]
pub struct PatternMatcher {
    /// Finds the leftmost start.
    first: regex::Regex,
    /// Extends a match from a fixed start to its longest end.
    longest: meta::Regex,
}

impl PatternMatcher {
    pub fn new(pattern: &str) -> Result<Self, CoreError> {
        if pattern.is_empty() {
            return Err(CoreError::InvalidRule("pattern must not be empty".into()));
        }
        let first = regex::Regex::new(pattern).map_err(|e| CoreError::InvalidRule(format!("{pattern}: {e}")))?;
        let longest = meta::Regex::builder()
            .configure(meta::Regex::config().match_kind(MatchKind::All))
            .build(pattern)
            .map_err(|e| CoreError::InvalidRule(format!("{pattern}: {e}")))?;
        Ok(Self { first, longest })
    }
}

impl Matcher for PatternMatcher {
    fn find_at(&self, hay: &str, from: usize) -> Option<(usize, usize)> {
        let start = self.first.find_at(hay, from)?.start();
        let input = Input::new(hay).range(start..).anchored(Anchored::Yes);
        let end = self.longest.find(input).map_or(start, |m| m.end());
        Some((start, end))
    }
}

pub fn compile_rule(rule: &Rule) -> Result<Box<dyn Matcher>, CoreError> {
    Ok(match rule {
        Rule::Pattern(pattern) => Box::new(PatternMatcher::new(pattern)?),
        Rule::Gazetteer(terms) => Box::new(Gazetteer::new(terms.iter().cloned())?),
    })
}

pub fn compile_label(cfg: &LabelConfig) -> Result<CompiledLabel<'static>, CoreError> {
    let matchers = cfg.rules.iter().map(compile_rule).collect::<Result<Vec<_>, _>>()?;
    Ok(CompiledLabel { label: cfg.label.clone(), matchers })
}

/// Checks label names are non-empty and unique and that every rule compiles.
pub fn validate_labels(configs: &[LabelConfig]) -> Result<(), CoreError> {
    for (i, c) in configs.iter().enumerate() {
        if c.label.trim().is_empty() {
            return Err(CoreError::Validation("label name must not be empty".into()));
        }
        if configs[..i].iter().any(|p| p.label == c.label) {
            return Err(CoreError::Validation(format!("duplicate label `{}`", c.label)));
        }
        compile_label(c)?;
    }
    Ok(())
}

pub fn compile_labels(configs: &[LabelConfig]) -> Result<Vec<CompiledLabel<'static>>, CoreError> {
    configs.iter().map(compile_label).collect()
}
