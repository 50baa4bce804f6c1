//! Random operation sequences over table and map artifacts.

use docmine_core::geom::{BBox, Point};
use docmine_core::map::{Axis, GridLine, GridlineEdit, LineSource, MapArtifact, MapStage};
use docmine_core::table::{CellContent, CellSource, CellSpan, GridStructure, PipelineStage, StructureEdit, TableArtifact};
use docmine_core::time::Timestamp;
use rand::seq::IndexedRandom;
use rand::Rng as _;

use super::Rng;

const PAGE: BBox = BBox { x0: 0.0, y0: 0.0, x1: 600.0, y1: 800.0 };
const REGIONS: [BBox; 3] = [
    BBox { x0: 50.0, y0: 100.0, x1: 350.0, y1: 300.0 },
    BBox { x0: 60.0, y0: 110.0, x1: 360.0, y1: 290.0 },
    BBox { x0: 500.0, y0: 700.0, x1: 700.0, y1: 900.0 },
];

#[derive(Debug, Clone)]
pub enum TableOp {
    ConfirmRegion(BBox),
    ProposeStructure(GridStructure),
    EditStructure(StructureEdit),
    ConfirmStructure,
    ProposeContent { complete: bool },
    EditCell(usize, usize),
    ConfirmContent,
    Revert(PipelineStage),
}

fn random_grid(rng: &mut Rng, region: &BBox) -> GridStructure {
    let mut bounds = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| (rng.random_range(lo..hi) * 4.0).round() / 4.0).collect();
        v.push(lo);
        v.push(hi);
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let row_bounds = bounds(region.y0, region.y1, 3);
    let col_bounds = bounds(region.x0, region.x1, 3);
    let mut g = GridStructure { row_bounds, col_bounds, merges: vec![] };
    if g.rows() > 1 && rng.random_bool(0.5) {
        g.merges.push(CellSpan::new(0, 0, 1, 0));
    }
    if rng.random_bool(0.1) {
        g.row_bounds.reverse();
    }
    g
}

fn random_edit(rng: &mut Rng) -> StructureEdit {
    let i = rng.random_range(0..5);
    match rng.random_range(0..6) {
        0 => StructureEdit::AddRow { y: rng.random_range(90.0..310.0) },
        1 => StructureEdit::AddCol { x: rng.random_range(40.0..370.0) },
        2 => StructureEdit::DeleteRow { index: i },
        3 => StructureEdit::DeleteCol { index: i },
        4 => {
            let (r0, c0) = (rng.random_range(0..3), rng.random_range(0..3));
            StructureEdit::Merge { span: CellSpan::new(r0, c0, r0 + rng.random_range(0..2), c0 + rng.random_range(0..2)) }
        }
        _ => StructureEdit::Split { row: rng.random_range(0..3), col: rng.random_range(0..3) },
    }
}

pub fn random_table_op(rng: &mut Rng, t: &TableArtifact) -> TableOp {
    match rng.random_range(0..8) {
        0 => TableOp::ConfirmRegion(*REGIONS.choose(rng).unwrap()),
        1 => TableOp::ProposeStructure(random_grid(rng, &t.region)),
        2 => TableOp::EditStructure(random_edit(rng)),
        3 => TableOp::ConfirmStructure,
        4 => TableOp::ProposeContent { complete: rng.random_bool(0.85) },
        5 => TableOp::EditCell(rng.random_range(0..4), rng.random_range(0..4)),
        6 => TableOp::ConfirmContent,
        _ => TableOp::Revert(*PipelineStage::ALL.choose(rng).unwrap()),
    }
}

fn contents(grid: Option<&GridStructure>, complete: bool) -> Vec<CellContent> {
    let Some(g) = grid else { return vec![] };
    let mut cells: Vec<CellContent> = g
        .logical_cells()
        .iter()
        .map(|s| CellContent { row: s.r0, col: s.c0, text: format!("{},{}", s.r0, s.c0), source: CellSource::TextLayer, edited: false })
        .collect();
    if !complete {
        cells.pop();
    }
    cells
}

fn next_table(s: PipelineStage) -> Option<PipelineStage> {
    PipelineStage::ALL.iter().copied().find(|x| *x > s)
}

/// Applies `op` and checks the transition rules against the prior state.
pub fn step_table(t: &mut TableArtifact, op: &TableOp, now: Timestamp, seq: u64) -> Result<(), String> {
    let before = t.clone();
    let res = match op {
        TableOp::ConfirmRegion(r) => t.confirm_region(*r, &PAGE, now).map(drop),
        TableOp::ProposeStructure(g) => t.propose_structure(g.clone(), now),
        TableOp::EditStructure(e) => t.edit_structure(e, now).map(drop),
        TableOp::ConfirmStructure => t.confirm_structure(now),
        TableOp::ProposeContent { complete } => t.propose_content(contents(t.grid.clone().as_ref(), *complete), now),
        TableOp::EditCell(r, c) => t.edit_cell(*r, *c, "edited", now).map(drop),
        TableOp::ConfirmContent => t.confirm_content(seq, now),
        TableOp::Revert(target) => t.revert(*target, now),
    };
    let ctx = || format!("{op:?} from {:?}", before.stage);
    if !t.is_consistent() {
        return Err(format!("inconsistent after {}", ctx()));
    }
    if !PAGE.contains(&t.region) {
        return Err(format!("region left the page after {}", ctx()));
    }
    if res.is_err() {
        return if *t == before { Ok(()) } else { Err(format!("failed op mutated the artifact: {}", ctx())) };
    }
    match op {
        TableOp::Revert(target) => {
            if !(*target < before.stage && t.stage == *target) {
                return Err(format!("revert landed on {:?}: {}", t.stage, ctx()));
            }
            if t.region != before.region {
                return Err(format!("revert changed the region: {}", ctx()));
            }
            if *target >= PipelineStage::StructureProposed && t.grid != before.grid {
                return Err(format!("revert dropped a retained grid: {}", ctx()));
            }
            if *target >= PipelineStage::ContentProposed && t.cells != before.cells {
                return Err(format!("revert dropped retained cells: {}", ctx()));
            }
            if *target < PipelineStage::ContentConfirmed && t.confirmation_seq.is_some() {
                return Err(format!("revert kept the confirmation: {}", ctx()));
            }
        }
        TableOp::EditStructure(_) => {
            if before.stage == PipelineStage::ContentConfirmed || t.stage != PipelineStage::StructureProposed || t.cells.is_some() {
                return Err(format!("edit_structure ended at {:?}: {}", t.stage, ctx()));
            }
        }
        _ => {
            if t.stage != before.stage && Some(t.stage) != next_table(before.stage) {
                return Err(format!("skipped from {:?} to {:?}: {}", before.stage, t.stage, ctx()));
            }
            if t.stage == before.stage && !matches!(op, TableOp::EditCell(..)) && *t != before {
                return Err(format!("repeated confirm changed the artifact: {}", ctx()));
            }
        }
    }
    if before.stage == PipelineStage::ContentConfirmed && !matches!(op, TableOp::Revert(_)) && *t != before {
        return Err(format!("confirmed table changed: {}", ctx()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub enum MapOp {
    ConfirmRegion(BBox),
    ProposeGridlines(Vec<GridLine>),
    EditGridline(GridlineEdit),
    ConfirmGrid,
    ConfirmCalibration,
    Mark(Point),
    Attach(usize, Option<String>),
    Delete(usize),
    Revert(MapStage),
}

fn random_lines(rng: &mut Rng) -> Vec<GridLine> {
    let mut out = Vec::new();
    for axis in [Axis::Longitude, Axis::Latitude] {
        for i in 0..rng.random_range(0..4) {
            let pos = 20.0 + 60.0 * i as f64;
            out.push(GridLine { axis, pixel_pos: pos, value: 10.0 - pos / 50.0, source: LineSource::Auto });
        }
    }
    out
}

pub fn random_map_op(rng: &mut Rng, m: &MapArtifact) -> MapOp {
    let point = |rng: &mut Rng| rng.random_range(0..m.points.len().max(1) + 1);
    match rng.random_range(0..9) {
        0 => MapOp::ConfirmRegion(*REGIONS.choose(rng).unwrap()),
        1 => MapOp::ProposeGridlines(random_lines(rng)),
        2 => MapOp::EditGridline(match rng.random_range(0..3) {
            0 => GridlineEdit::Add {
                axis: if rng.random_bool(0.5) { Axis::Latitude } else { Axis::Longitude },
                pixel_pos: rng.random_range(-10.0..320.0),
                value: rng.random_range(-100.0..100.0),
            },
            1 => GridlineEdit::SetValue { index: rng.random_range(0..6), value: rng.random_range(-100.0..100.0) },
            _ => GridlineEdit::Delete { index: rng.random_range(0..6) },
        }),
        3 => MapOp::ConfirmGrid,
        4 => MapOp::ConfirmCalibration,
        5 => MapOp::Mark(Point::new(rng.random_range(-5.0..320.0), rng.random_range(-5.0..220.0))),
        6 => MapOp::Attach(point(rng), rng.random_bool(0.7).then(|| "S1".to_string())),
        7 => MapOp::Delete(point(rng)),
        _ => MapOp::Revert(*MapStage::ALL.choose(rng).unwrap()),
    }
}

fn next_map(s: MapStage) -> Option<MapStage> {
    MapStage::ALL.iter().copied().find(|x| *x > s)
}

pub fn step_map(m: &mut MapArtifact, op: &MapOp, now: Timestamp) -> Result<(), String> {
    let before = m.clone();
    let point_id = |i: &usize| before.points.get(*i).map_or_else(|| "missing".to_string(), |p| p.point_id.clone());
    let res = match op {
        MapOp::ConfirmRegion(r) => m.confirm_region(*r, &PAGE, now).map(drop),
        MapOp::ProposeGridlines(lines) => m.propose_gridlines(lines.clone(), now),
        MapOp::EditGridline(e) => m.edit_gridline(e, now).map(drop),
        MapOp::ConfirmGrid => m.confirm_grid(0.25, now).map(drop),
        MapOp::ConfirmCalibration => m.confirm_calibration(now),
        MapOp::Mark(p) => m.mark_point(*p, now).map(drop),
        MapOp::Attach(i, key) => m.attach_point(&point_id(i), key.as_deref(), now).map(drop),
        MapOp::Delete(i) => m.delete_point(&point_id(i), now).map(drop),
        MapOp::Revert(target) => m.revert(*target, now),
    };
    let ctx = || format!("{op:?} from {:?}", before.stage);
    if !m.is_consistent() {
        return Err(format!("inconsistent after {}", ctx()));
    }
    if res.is_err() {
        return if *m == before { Ok(()) } else { Err(format!("failed op mutated the map: {}", ctx())) };
    }
    match op {
        MapOp::Revert(target) => {
            if !(*target < before.stage && m.stage == *target) || m.region != before.region {
                return Err(format!("bad revert: {}", ctx()));
            }
            if *target >= MapStage::GridProposed && m.gridlines != before.gridlines {
                return Err(format!("revert dropped retained gridlines: {}", ctx()));
            }
            if *target >= MapStage::GridConfirmed && m.calibration != before.calibration {
                return Err(format!("revert dropped a retained calibration: {}", ctx()));
            }
        }
        MapOp::EditGridline(_) => {
            if before.stage == MapStage::Marking || m.stage != MapStage::GridProposed {
                return Err(format!("edit_gridline ended at {:?}: {}", m.stage, ctx()));
            }
        }
        _ => {
            if m.stage != before.stage && Some(m.stage) != next_map(before.stage) {
                return Err(format!("skipped from {:?} to {:?}: {}", before.stage, m.stage, ctx()));
            }
        }
    }
    if before.stage == MapStage::Marking && !matches!(op, MapOp::Revert(_)) {
        let frozen = m.stage == MapStage::Marking
            && m.region == before.region
            && m.gridlines == before.gridlines
            && m.calibration == before.calibration;
        if !frozen {
            return Err(format!("calibrated map changed: {}", ctx()));
        }
    }
    Ok(())
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Coverage {
    pub steps: usize,
    pub reverts: usize,
    pub reached_final: usize,
}

/// One random sequence of `len` operations on a fresh table and a fresh map.
pub fn run_sequence(seed: u64, len: usize) -> Result<Coverage, String> {
    let mut rng = super::rng(seed);
    let mut cov = Coverage::default();
    let mut t = TableArtifact::detected("t", "d", 0, REGIONS[0], Timestamp(0));
    let mut m = MapArtifact::detected("m", "d", 0, REGIONS[0], Timestamp(0));
    for i in 0..len {
        let now = Timestamp(i as i64 + 1);
        let op = random_table_op(&mut rng, &t);
        let stage = t.stage;
        step_table(&mut t, &op, now, i as u64)?;
        cov.reverts += usize::from(matches!(op, TableOp::Revert(_)) && t.stage != stage);
        cov.reached_final += usize::from(t.stage == PipelineStage::ContentConfirmed && stage != t.stage);

        let op = random_map_op(&mut rng, &m);
        let stage = m.stage;
        step_map(&mut m, &op, now)?;
        cov.reverts += usize::from(matches!(op, MapOp::Revert(_)) && m.stage != stage);
        cov.reached_final += usize::from(m.stage == MapStage::Marking && stage != m.stage);
        cov.steps += 2;
    }
    Ok(cov)
}
