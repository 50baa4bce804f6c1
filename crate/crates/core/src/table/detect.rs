//! Geometric table-region detector.
//!
//! Two cues: stacks of at least two long horizontal rules (at least 40% of the
//! page width by default), and runs of three or more text lines whose runs
//! align into two or more columns. Rules drawn over images (map graticules)
//! are ignored.

use alloc::vec::Vec;

use super::TableConfig;
use crate::geom::{group_lines, BBox, LineSegment, Orientation, PageModel, TextLine};

fn overlap_len(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

fn ruled_regions(page: &PageModel, cfg: &TableConfig) -> Vec<BBox> {
    let images: Vec<BBox> = page.image_regions.iter().map(|b| b.expand(1.0)).collect();
    let mut long: Vec<&LineSegment> = page
        .line_segments
        .iter()
        .filter(|s| {
            s.orientation == Orientation::Horizontal
                && s.length() >= cfg.min_rule_fraction * page.width
                && !images.iter().any(|i| i.contains_point(s.midpoint()))
        })
        .collect();
    long.sort_by(|a, b| a.axis_position().total_cmp(&b.axis_position()));
    let lines = group_lines(&page.text_runs);

    let mut clusters: Vec<Vec<&LineSegment>> = Vec::new();
    for seg in long {
        let joined = clusters.last_mut().is_some_and(|cluster| {
            let prev = cluster.last().expect("non-empty cluster");
            let (x0, x1) = cluster.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                let (a, b) = s.span();
                (lo.min(a), hi.max(b))
            });
            let (a, b) = seg.span();
            let shorter = (x1 - x0).min(b - a);
            if overlap_len((x0, x1), (a, b)) < 0.5 * shorter {
                return false;
            }
            let (top, bottom) = (prev.axis_position(), seg.axis_position());
            let width = x1 - x0;
            // A paragraph between two rules means two separate tables.
            let prose_between = lines.iter().any(|l| {
                let cy = l.bbox.center().y;
                cy > top && cy < bottom && l.is_prose() && l.bbox.width() >= 0.5 * width
            });
            if !prose_between {
                cluster.push(seg);
            }
            !prose_between
        });
        if !joined {
            clusters.push(alloc::vec![seg]);
        }
    }

    clusters
        .into_iter()
        .filter(|c| c.len() >= 2)
        .map(|c| {
            c.iter()
                .map(|s| s.bbox())
                .reduce(|a, b| a.union(&b))
                .expect("non-empty cluster")
        })
        .collect()
}

fn aligned_columns(a: &TextLine<'_>, b: &TextLine<'_>) -> usize {
    b.runs
        .iter()
        .filter(|rb| {
            a.runs
                .iter()
                .any(|ra| overlap_len((ra.bbox.x0, ra.bbox.x1), (rb.bbox.x0, rb.bbox.x1)) > 0.0)
        })
        .count()
}

fn aligned_text_regions(page: &PageModel, taken: &[BBox]) -> Vec<BBox> {
    let free = page
        .text_runs
        .iter()
        .filter(|r| !taken.iter().any(|t| t.contains_point(r.bbox.center())));
    let lines = group_lines(free);
    let mut out = Vec::new();
    let mut block: Vec<&TextLine> = Vec::new();
    let flush = |block: &mut Vec<&TextLine>, out: &mut Vec<BBox>| {
        if block.len() >= 3 {
            out.push(block.iter().map(|l| l.bbox).reduce(|a, b| a.union(&b)).expect("non-empty"));
        }
        block.clear();
    };
    for line in &lines {
        let tabular = line.runs.len() >= 2 && !line.is_prose();
        if !tabular {
            flush(&mut block, &mut out);
            continue;
        }
        let continues = block.last().is_some_and(|prev| {
            line.bbox.y0 - prev.bbox.y1 <= 2.0 * line.font_size() && aligned_columns(prev, line) >= 2
        });
        if !continues {
            flush(&mut block, &mut out);
        }
        block.push(line);
    }
    flush(&mut block, &mut out);
    out
}

pub fn detect_table_regions(page: &PageModel, cfg: &TableConfig) -> Vec<BBox> {
    let mut regions = ruled_regions(page, cfg);
    let mut taken = regions.clone();
    taken.extend(page.image_regions.iter().map(|b| b.expand(cfg.margin_band)));
    regions.extend(aligned_text_regions(page, &taken));

    // Union anything that overlaps so the result is pairwise disjoint.
    let mut merged: Vec<BBox> = Vec::new();
    for r in regions {
        let mut r = r;
        while let Some(i) = merged.iter().position(|m| m.intersects(&r)) {
            r = r.union(&merged.remove(i));
        }
        merged.push(r);
    }
    merged.sort_by(|a, b| a.y0.total_cmp(&b.y0).then(a.x0.total_cmp(&b.x0)));
    merged
}
