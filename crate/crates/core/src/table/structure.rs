//! Rule-based cell structure recognition inside a confirmed table region.
//!
//! Ruling lines give separators directly. Between rulings (or across the
//! whole region when an axis carries no rules) separators come from a
//! whitespace projection of the text runs. Runs that straddle a separator far
//! enough are taken as merged cells.

use alloc::vec::Vec;

use super::grid::{CellSpan, GridStructure};
use super::TableConfig;
use crate::error::CoreError;
use crate::geom::{BBox, LineSegment, Orientation, PageModel, TextRun};

/// Clusters sorted positions closer than `tol` into their mean.
pub(crate) fn cluster_positions(mut positions: Vec<f64>, tol: f64) -> Vec<f64> {
    positions.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for p in positions {
        match out.last_mut() {
            Some((sum, n)) if p - last < tol => {
                *sum += p;
                *n += 1;
            }
            _ => out.push((p, 1)),
        }
        last = p;
    }
    out.into_iter().map(|(s, n)| s / n as f64).collect()
}

/// Extents of a run on the measured axis and on the cross axis.
#[derive(Debug, Clone, Copy)]
struct Item {
    lo: f64,
    hi: f64,
    cross_lo: f64,
    cross_hi: f64,
}

fn items(runs: &[&TextRun], rows: bool) -> Vec<Item> {
    runs.iter()
        .map(|r| {
            let b = r.bbox;
            if rows {
                Item { lo: b.y0, hi: b.y1, cross_lo: b.x0, cross_hi: b.x1 }
            } else {
                Item { lo: b.x0, hi: b.x1, cross_lo: b.y0, cross_hi: b.y1 }
            }
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Whitespace-projection separators for one axis.
///
/// The reference gap is the median over consecutive runs in axis order
/// (overlapping runs contribute zero). Runs that bridge two disjoint runs
/// sharing another line are left out of the occupancy profile so a spanning
/// header does not hide the column gap beneath it.
fn projection_separators(items: &[Item], cfg: &TableConfig) -> Vec<f64> {
    if items.len() < 2 {
        return Vec::new();
    }
    let mut sorted: Vec<Item> = items.to_vec();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut gaps = Vec::with_capacity(sorted.len() - 1);
    let mut reach = sorted[0].hi;
    for it in &sorted[1..] {
        gaps.push((it.lo - reach).max(0.0));
        reach = reach.max(it.hi);
    }
    let threshold = (cfg.gap_factor * median(gaps).unwrap_or(0.0)).max(cfg.min_gap);

    let other_line = |a: &Item, b: &Item| a.cross_hi <= b.cross_lo || b.cross_hi <= a.cross_lo;
    let overlaps = |a: &Item, b: &Item| a.lo < b.hi && b.lo < a.hi;
    let bridging = |r: &Item| {
        let under: Vec<&Item> = items
            .iter()
            .filter(|o| other_line(r, o) && overlaps(r, o))
            .collect();
        under
            .iter()
            .any(|a| under.iter().any(|b| a.hi + cfg.min_gap <= b.lo && !other_line(a, b)))
    };
    let mut occupied: Vec<(f64, f64)> = items
        .iter()
        .filter(|r| !bridging(r))
        .map(|r| (r.lo, r.hi))
        .collect();
    occupied.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut seps = Vec::new();
    let mut iter = occupied.into_iter();
    let Some((_, mut end)) = iter.next() else {
        return seps;
    };
    for (lo, hi) in iter {
        let gap = lo - end;
        if gap >= threshold && gap > 0.0 {
            seps.push((lo + end) / 2.0);
        }
        end = end.max(hi);
    }
    seps
}

/// Bounds for one axis: region borders snapped to nearby rules, interior
/// rules, and projection separators inside each ruled interval.
fn axis_bounds(lo: f64, hi: f64, rules: &[f64], runs: &[&TextRun], rows: bool, cfg: &TableConfig) -> Vec<f64> {
    let tol = cfg.separator_merge;
    let mut bounds: Vec<f64> = Vec::new();
    let snapped_lo = rules.iter().copied().find(|r| (r - lo).abs() < tol).unwrap_or(lo);
    let snapped_hi = rules.iter().copied().rev().find(|r| (r - hi).abs() < tol).unwrap_or(hi);
    bounds.push(snapped_lo);
    bounds.extend(rules.iter().copied().filter(|r| *r > snapped_lo + tol && *r < snapped_hi - tol));
    bounds.push(snapped_hi);

    let mut extra = Vec::new();
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        let inside: Vec<&TextRun> = runs
            .iter()
            .copied()
            .filter(|r| {
                let c = r.bbox.center();
                let v = if rows { c.y } else { c.x };
                v > a && v < b
            })
            .collect();
        extra.extend(
            projection_separators(&items(&inside, rows), cfg)
                .into_iter()
                .filter(|s| *s > a + tol && *s < b - tol),
        );
    }
    bounds.extend(extra);
    bounds.sort_by(f64::total_cmp);
    bounds
}

/// Index of the interval of `bounds` containing `v` (clamped to the grid).
fn interval_of(bounds: &[f64], v: f64) -> usize {
    let n = bounds.len() - 1;
    bounds[1..n].partition_point(|b| *b <= v).min(n - 1)
}

/// Range of intervals covered by `[lo, hi]` after extending from the interval
/// holding `center` across every separator the run crosses far enough: the
/// part beyond the separator must exceed `ratio` times the part on the
/// center's side.
fn covered(bounds: &[f64], lo: f64, hi: f64, center: f64, ratio: f64) -> (usize, usize) {
    let home = interval_of(bounds, center);
    let (mut first, mut last) = (home, home);
    while first > 0 {
        let s = bounds[first];
        let (beyond, near) = (s - lo, hi - s);
        if beyond > 0.0 && beyond > ratio * near {
            first -= 1;
        } else {
            break;
        }
    }
    while last + 2 < bounds.len() {
        let s = bounds[last + 1];
        let (beyond, near) = (hi - s, s - lo);
        if beyond > 0.0 && beyond > ratio * near {
            last += 1;
        } else {
            break;
        }
    }
    (first, last)
}

fn rules_in<'a>(segs: &'a [LineSegment], region: &'a BBox, orientation: Orientation) -> impl Iterator<Item = f64> + 'a {
    segs.iter()
        .filter(move |s| s.orientation == orientation && region.contains_point(s.midpoint()))
        .map(LineSegment::axis_position)
}

pub fn recognize_structure(page: &PageModel, region: &BBox, cfg: &TableConfig) -> Result<GridStructure, CoreError> {
    if !(region.width() > 0.0 && region.height() > 0.0) {
        return Err(CoreError::EmptyRegion);
    }
    let search = region.expand(cfg.separator_merge);
    let h_rules = cluster_positions(rules_in(&page.line_segments, &search, Orientation::Horizontal).collect(), cfg.separator_merge);
    let v_rules = cluster_positions(rules_in(&page.line_segments, &search, Orientation::Vertical).collect(), cfg.separator_merge);
    let runs: Vec<&TextRun> = page.runs_in(region).collect();
    if runs.is_empty() && h_rules.is_empty() && v_rules.is_empty() {
        return Err(CoreError::NoContent);
    }

    let mut grid = GridStructure {
        row_bounds: axis_bounds(region.y0, region.y1, &h_rules, &runs, true, cfg),
        col_bounds: axis_bounds(region.x0, region.x1, &v_rules, &runs, false, cfg),
        merges: Vec::new(),
    };
    for run in &runs {
        let b = run.bbox;
        let c = b.center();
        let (r0, r1) = covered(&grid.row_bounds, b.y0, b.y1, c.y, cfg.merge_cross_ratio);
        let (c0, c1) = covered(&grid.col_bounds, b.x0, b.x1, c.x, cfg.merge_cross_ratio);
        let span = CellSpan::new(r0, c0, r1, c1);
        if !span.is_single() {
            grid.merges.push(span);
        }
    }
    grid.normalize_merges();
    grid.validate()?;
    Ok(grid)
}
