//! Map georeferencing: margin-label gridlines, per-axis least-squares
//! calibration and click-to-coordinate marking.
//!
//! Pixel positions are region-relative page points with y growing downwards,
//! so a north-up map has a negative latitude slope.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::correction::{to_value, Adjustment, Module};
use crate::error::CoreError;
use crate::geom::{BBox, Orientation, PageModel, Point, TextRun};
use crate::time::Timestamp;

/// Labels must sit within this distance (pt) of the region border.
pub const LABEL_BAND: f64 = 12.0;
/// Extra slack (pt) when pairing a label with its line, beyond half the label extent.
pub const PAIR_SLACK: f64 = 3.0;
/// Gridlines closer than this (pt) on one axis are the same line.
pub const DEDUP_DISTANCE: f64 = 1.0;
/// Residual (degrees) above which a fit is flagged as non-linear.
pub const DEFAULT_RESIDUAL_TOLERANCE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Vertical lines, positioned along x.
    Longitude,
    /// Horizontal lines, positioned along y.
    Latitude,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Longitude => "longitude",
            Axis::Latitude => "latitude",
        }
    }

    pub fn limit(self) -> f64 {
        match self {
            Axis::Longitude => 180.0,
            Axis::Latitude => 90.0,
        }
    }

    pub fn accepts(self, value: f64) -> bool {
        value.is_finite() && value.abs() <= self.limit()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeLabel {
    pub value: f64,
    pub axis: Option<Axis>,
    /// Carries a degree sign or hemisphere letter, as opposed to a bare number.
    pub marked: bool,
}

fn take_number(chars: &[char], i: &mut usize) -> Option<f64> {
    let start = *i;
    let mut seen_dot = false;
    while *i < chars.len() && (chars[*i].is_ascii_digit() || (chars[*i] == '.' && !seen_dot)) {
        seen_dot |= chars[*i] == '.';
        *i += 1;
    }
    let s: String = chars[start..*i].iter().collect();
    if !s.chars().any(|c| c.is_ascii_digit()) {
        *i = start;
        return None;
    }
    s.parse().ok()
}

fn skip_ws(chars: &[char], i: &mut usize) {
    while *i < chars.len() && chars[*i].is_whitespace() {
        *i += 1;
    }
}

/// Parses `D[°][ M[′][ S[″]]] [N|S|E|W]` or a bare signed decimal.
///
/// ```
/// use docmine_core::map::{parse_degree_label, Axis};
/// let l = parse_degree_label("15°30′S").unwrap();
/// assert_eq!(l.value, -15.5);
/// assert_eq!(l.axis, Some(Axis::Latitude));
/// ```
pub fn parse_degree_label(token: &str) -> Result<DegreeLabel, CoreError> {
    let bad = || CoreError::UnparseableLabel(token.into());
    let chars: Vec<char> = token.trim().chars().collect();
    let mut i = 0;
    let mut negative = false;
    if let Some(&c) = chars.first() {
        if matches!(c, '-' | '+' | '\u{2212}') {
            negative = c != '+';
            i += 1;
        }
    }
    const MARKS: [&[char]; 3] = [&['°', 'º'], &['′', '\''], &['″', '"']];
    let mut parts = [0.0f64; 3];
    let mut count = 0;
    let mut marked = false;
    while count < 3 {
        skip_ws(&chars, &mut i);
        let Some(n) = take_number(&chars, &mut i) else { break };
        parts[count] = n;
        let before_ws = i;
        skip_ws(&chars, &mut i);
        let mut separated = i > before_ws;
        if i < chars.len() && MARKS[count].contains(&chars[i]) {
            marked |= count == 0;
            i += 1;
            separated = true;
        }
        count += 1;
        if !separated {
            break;
        }
    }
    if count == 0 {
        return Err(bad());
    }
    skip_ws(&chars, &mut i);
    let mut axis = None;
    let mut sign = if negative { -1.0 } else { 1.0 };
    if i < chars.len() {
        let (ax, s) = match chars[i].to_ascii_uppercase() {
            'N' => (Axis::Latitude, 1.0),
            'S' => (Axis::Latitude, -1.0),
            'E' => (Axis::Longitude, 1.0),
            'W' => (Axis::Longitude, -1.0),
            _ => return Err(bad()),
        };
        if negative || chars[0] == '+' {
            return Err(bad());
        }
        axis = Some(ax);
        sign = s;
        marked = true;
        i += 1;
    }
    if i != chars.len() || parts[1] >= 60.0 || parts[2] >= 60.0 {
        return Err(bad());
    }
    let value = sign * (parts[0] + parts[1] / 60.0 + parts[2] / 3600.0);
    // -0.0 and 0.0 are the same coordinate
    Ok(DegreeLabel { value: value + 0.0, axis, marked })
}

/// Whether `text` is a degree-formatted coordinate (not just a number).
pub fn is_degree_token(text: &str) -> bool {
    parse_degree_label(text).is_ok_and(|l| l.marked)
}

/// Image regions with at least two degree-formatted text runs within the
/// label band of their border.
pub fn detect_map_regions(page: &PageModel) -> Vec<BBox> {
    page.image_regions
        .iter()
        .filter(|img| {
            page.text_runs
                .iter()
                .filter(|r| r.bbox.distance(img) <= LABEL_BAND && is_degree_token(&r.text))
                .count()
                >= 2
        })
        .copied()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSource {
    Auto,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLine {
    pub axis: Axis,
    pub pixel_pos: f64,
    pub value: f64,
    pub source: LineSource,
}

/// Which side of the region a label sits on, or `None` when it is not in the band.
fn label_axis(region: &BBox, run: &TextRun) -> Option<Axis> {
    let b = &run.bbox;
    if b.distance(region) > LABEL_BAND {
        return None;
    }
    let below = b.y0 >= region.y1 - 1.0;
    let above = b.y1 <= region.y0 + 1.0;
    let left = b.x1 <= region.x0 + 1.0;
    let right = b.x0 >= region.x1 - 1.0;
    match (below || above, left || right) {
        (true, false) => Some(Axis::Longitude),
        (false, true) => Some(Axis::Latitude),
        _ => None,
    }
}

/// Pairs each margin label with the nearest perpendicular line or tick.
/// Unpaired and out-of-range labels are dropped. Result is sorted by axis,
/// then position, with duplicates within [`DEDUP_DISTANCE`] removed.
pub fn detect_gridlines(page: &PageModel, region: &BBox) -> Vec<GridLine> {
    let reach = region.expand(LABEL_BAND);
    let mut found: Vec<GridLine> = Vec::new();
    for run in &page.text_runs {
        let Some(side) = label_axis(region, run) else { continue };
        let Ok(label) = parse_degree_label(&run.text) else { continue };
        let axis = label.axis.unwrap_or(side);
        if axis != side || !axis.accepts(label.value) {
            continue;
        }
        let (want, center, half) = match axis {
            Axis::Longitude => (Orientation::Vertical, run.bbox.center().x, run.bbox.width() / 2.0),
            Axis::Latitude => (Orientation::Horizontal, run.bbox.center().y, run.bbox.height() / 2.0),
        };
        let nearest = page
            .line_segments
            .iter()
            .filter(|s| s.orientation == want && s.bbox().intersection(&reach).is_some())
            .map(|s| s.axis_position())
            .filter(|p| (p - center).abs() <= half + PAIR_SLACK)
            .min_by(|a, b| (a - center).abs().total_cmp(&(b - center).abs()));
        if let Some(pos) = nearest {
            let origin = match axis {
                Axis::Longitude => region.x0,
                Axis::Latitude => region.y0,
            };
            found.push(GridLine { axis, pixel_pos: pos - origin, value: label.value, source: LineSource::Auto });
        }
    }
    found.sort_by(|a, b| a.axis.cmp(&b.axis).then(a.pixel_pos.total_cmp(&b.pixel_pos)));
    let mut out: Vec<GridLine> = Vec::new();
    for g in found {
        let dup = out
            .last()
            .is_some_and(|p| p.axis == g.axis && (g.pixel_pos - p.pixel_pos).abs() <= DEDUP_DISTANCE);
        if !dup {
            out.push(g);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisFit {
    /// Degrees per point.
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub n_lines: usize,
}

impl AxisFit {
    pub fn apply(&self, pos: f64) -> f64 {
        self.slope * pos + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub longitude: Option<AxisFit>,
    pub latitude: Option<AxisFit>,
    /// Worst per-axis residual.
    pub rms_residual: f64,
    pub non_linear_warning: bool,
}

impl Calibration {
    pub fn is_complete(&self) -> bool {
        self.longitude.is_some() && self.latitude.is_some()
    }
}

/// Ordinary least squares of value on position, computed about the means.
pub fn fit_axis(axis: Axis, samples: &[(f64, f64)]) -> Result<AxisFit, CoreError> {
    if samples.len() < 2 {
        return Err(CoreError::InsufficientLines(axis.name()));
    }
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx) * (s.0 - mx)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    if sxx == 0.0 {
        return Err(CoreError::DegenerateAxis(axis.name()));
    }
    let slope = sxy / sxx;
    if slope == 0.0 || !slope.is_finite() {
        return Err(CoreError::DegenerateAxis(axis.name()));
    }
    let intercept = my - slope * mx;
    let sse: f64 = samples
        .iter()
        .map(|&(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    Ok(AxisFit { slope, intercept, rms_residual: libm::sqrt(sse / n), n_lines: samples.len() })
}

/// Fits every axis that has gridlines. At least one axis must be fit.
pub fn fit_calibration(lines: &[GridLine], tolerance: f64) -> Result<Calibration, CoreError> {
    let samples = |axis: Axis| -> Vec<(f64, f64)> {
        lines.iter().filter(|l| l.axis == axis).map(|l| (l.pixel_pos, l.value)).collect()
    };
    let fit = |axis: Axis| -> Result<Option<AxisFit>, CoreError> {
        let s = samples(axis);
        if s.is_empty() {
            Ok(None)
        } else {
            fit_axis(axis, &s).map(Some)
        }
    };
    let longitude = fit(Axis::Longitude)?;
    let latitude = fit(Axis::Latitude)?;
    if longitude.is_none() && latitude.is_none() {
        return Err(CoreError::InsufficientLines(Axis::Longitude.name()));
    }
    let rms_residual = longitude
        .iter()
        .chain(latitude.iter())
        .map(|f| f.rms_residual)
        .fold(0.0, f64::max);
    Ok(Calibration { longitude, latitude, rms_residual, non_linear_warning: rms_residual > tolerance })
}

pub fn round6(v: f64) -> f64 {
    libm::round(v * 1e6) / 1e6 + 0.0
}

/// `(latitude, longitude)` for a region-relative pixel, rounded to 6 decimals.
pub fn pixel_to_coordinate(cal: &Calibration, pixel: Point) -> Result<(f64, f64), CoreError> {
    let (Some(lon), Some(lat)) = (cal.longitude, cal.latitude) else {
        return Err(CoreError::NotCalibrated);
    };
    Ok((round6(lat.apply(pixel.y)), round6(lon.apply(pixel.x))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedPoint {
    pub point_id: String,
    pub pixel: Point,
    pub latitude: f64,
    pub longitude: f64,
    pub attached_key: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MapStage {
    Detected,
    RegionConfirmed,
    GridProposed,
    GridConfirmed,
    Marking,
}

impl MapStage {
    pub const ALL: [MapStage; 5] = [
        MapStage::Detected,
        MapStage::RegionConfirmed,
        MapStage::GridProposed,
        MapStage::GridConfirmed,
        MapStage::Marking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MapStage::Detected => "Detected",
            MapStage::RegionConfirmed => "RegionConfirmed",
            MapStage::GridProposed => "GridProposed",
            MapStage::GridConfirmed => "GridConfirmed",
            MapStage::Marking => "Marking",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum GridlineEdit {
    Add { axis: Axis, pixel_pos: f64, value: f64 },
    SetValue { index: usize, value: f64 },
    Delete { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapArtifact {
    pub map_id: String,
    pub doc_id: String,
    pub page_index: usize,
    pub region: BBox,
    pub stage: MapStage,
    pub gridlines: Vec<GridLine>,
    pub calibration: Option<Calibration>,
    pub points: Vec<MarkedPoint>,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
    #[serde(default)]
    pub next_point: u64,
}

impl MapArtifact {
    pub fn detected(map_id: &str, doc_id: &str, page_index: usize, region: BBox, now: Timestamp) -> Self {
        Self {
            map_id: map_id.into(),
            doc_id: doc_id.into(),
            page_index,
            region,
            stage: MapStage::Detected,
            gridlines: Vec::new(),
            calibration: None,
            points: Vec::new(),
            created_at: now,
            updated_at: now,
            next_point: 0,
        }
    }

    fn invalid(&self, op: &'static str) -> CoreError {
        CoreError::InvalidStage { op, stage: self.stage.name() }
    }

    fn adjustment(&self, before: serde_json::Value, after: serde_json::Value) -> Adjustment {
        Adjustment::new(Module::Map, Some(&self.map_id), self.stage.name(), before, after)
    }

    pub fn is_consistent(&self) -> bool {
        self.calibration.is_some() == (self.stage >= MapStage::GridConfirmed)
            && (self.points.is_empty() || self.stage == MapStage::Marking)
            && (self.gridlines.is_empty() || self.stage >= MapStage::GridProposed)
    }

    pub fn confirm_region(&mut self, region: BBox, page: &BBox, now: Timestamp) -> Result<Option<Adjustment>, CoreError> {
        if self.stage == MapStage::RegionConfirmed && region == self.region {
            return Ok(None);
        }
        if self.stage != MapStage::Detected {
            return Err(self.invalid("confirm_region"));
        }
        if !region.is_finite() || region.width() <= 0.0 || region.height() <= 0.0 {
            return Err(CoreError::EmptyRegion);
        }
        if !page.contains(&region) {
            return Err(CoreError::RegionOutOfPage);
        }
        let adj = (region != self.region).then(|| self.adjustment(to_value(&self.region), to_value(&region)));
        self.region = region;
        self.stage = MapStage::RegionConfirmed;
        self.updated_at = now;
        Ok(adj)
    }

    pub fn propose_gridlines(&mut self, lines: Vec<GridLine>, now: Timestamp) -> Result<(), CoreError> {
        if self.stage != MapStage::RegionConfirmed {
            return Err(self.invalid("detect_gridlines"));
        }
        self.gridlines = lines;
        self.stage = MapStage::GridProposed;
        self.updated_at = now;
        Ok(())
    }

    pub fn edit_gridline(&mut self, edit: &GridlineEdit, now: Timestamp) -> Result<Adjustment, CoreError> {
        if !matches!(self.stage, MapStage::GridProposed | MapStage::GridConfirmed) {
            return Err(self.invalid("edit_gridline"));
        }
        let mut lines = self.gridlines.clone();
        match *edit {
            GridlineEdit::Add { axis, pixel_pos, value } => {
                let extent = match axis {
                    Axis::Longitude => self.region.width(),
                    Axis::Latitude => self.region.height(),
                };
                if !axis.accepts(value) {
                    return Err(CoreError::InvalidValue(format!("{value} is outside the {} range", axis.name())));
                }
                if !(0.0..=extent).contains(&pixel_pos) {
                    return Err(CoreError::InvalidValue(format!("position {pixel_pos} is outside the region")));
                }
                let at = lines
                    .iter()
                    .position(|l| (l.axis, l.pixel_pos) > (axis, pixel_pos))
                    .unwrap_or(lines.len());
                lines.insert(at, GridLine { axis, pixel_pos, value, source: LineSource::Manual });
            }
            GridlineEdit::SetValue { index, value } => {
                let line = lines.get_mut(index).ok_or(CoreError::UnknownLine(index))?;
                if !line.axis.accepts(value) {
                    return Err(CoreError::InvalidValue(format!("{value} is outside the {} range", line.axis.name())));
                }
                line.value = value;
                line.source = LineSource::Manual;
            }
            GridlineEdit::Delete { index } => {
                if index >= lines.len() {
                    return Err(CoreError::UnknownLine(index));
                }
                lines.remove(index);
            }
        }
        let adj = self.adjustment(to_value(edit), to_value(&lines));
        self.gridlines = lines;
        self.calibration = None;
        self.stage = MapStage::GridProposed;
        self.updated_at = now;
        Ok(adj)
    }

    /// Fits and stores the calibration. Repeating it at GridConfirmed returns
    /// the stored calibration unchanged.
    pub fn confirm_grid(&mut self, tolerance: f64, now: Timestamp) -> Result<Calibration, CoreError> {
        match self.stage {
            MapStage::GridConfirmed => Ok(self.calibration.expect("calibrated at GridConfirmed")),
            MapStage::GridProposed => {
                let cal = fit_calibration(&self.gridlines, tolerance)?;
                self.calibration = Some(cal);
                self.stage = MapStage::GridConfirmed;
                self.updated_at = now;
                Ok(cal)
            }
            _ => Err(self.invalid("fit_calibration")),
        }
    }

    /// Accepts the calibration and opens marking. Both axes must be fit.
    pub fn confirm_calibration(&mut self, now: Timestamp) -> Result<(), CoreError> {
        match self.stage {
            MapStage::Marking => Ok(()),
            MapStage::GridConfirmed => {
                if !self.calibration.is_some_and(|c| c.is_complete()) {
                    return Err(CoreError::NotCalibrated);
                }
                self.stage = MapStage::Marking;
                self.updated_at = now;
                Ok(())
            }
            _ => Err(self.invalid("confirm_calibration")),
        }
    }

    pub fn mark_point(&mut self, pixel: Point, now: Timestamp) -> Result<MarkedPoint, CoreError> {
        if self.stage != MapStage::Marking {
            return Err(CoreError::NotCalibrated);
        }
        let local = BBox::new(0.0, 0.0, self.region.width(), self.region.height());
        if !pixel.x.is_finite() || !pixel.y.is_finite() || !local.contains_point(pixel) {
            return Err(CoreError::OutOfRegion);
        }
        let cal = self.calibration.as_ref().ok_or(CoreError::NotCalibrated)?;
        let (latitude, longitude) = pixel_to_coordinate(cal, pixel)?;
        self.next_point += 1;
        let point = MarkedPoint {
            point_id: format!("{}-p{}", self.map_id, self.next_point),
            pixel,
            latitude,
            longitude,
            attached_key: None,
        };
        self.points.push(point.clone());
        self.updated_at = now;
        Ok(point)
    }

    fn point_mut(&mut self, point_id: &str) -> Result<&mut MarkedPoint, CoreError> {
        if self.stage != MapStage::Marking {
            return Err(CoreError::InvalidStage { op: "edit_point", stage: self.stage.name() });
        }
        self.points
            .iter_mut()
            .find(|p| p.point_id == point_id)
            .ok_or_else(|| CoreError::UnknownPoint(point_id.into()))
    }

    /// Binds a point to a key-entity value, or unbinds it with `None`.
    pub fn attach_point(&mut self, point_id: &str, key: Option<&str>, now: Timestamp) -> Result<Adjustment, CoreError> {
        let p = self.point_mut(point_id)?;
        let before = to_value(&p.attached_key);
        p.attached_key = key.map(String::from);
        let after = to_value(&p.attached_key);
        self.updated_at = now;
        Ok(self.adjustment(
            serde_json::json!({ "point_id": point_id, "attached_key": before }),
            serde_json::json!({ "point_id": point_id, "attached_key": after }),
        ))
    }

    pub fn delete_point(&mut self, point_id: &str, now: Timestamp) -> Result<MarkedPoint, CoreError> {
        self.point_mut(point_id)?;
        let i = self.points.iter().position(|p| p.point_id == point_id).expect("checked above");
        self.updated_at = now;
        Ok(self.points.remove(i))
    }

    /// Moves to a strictly earlier stage and drops everything produced after it.
    pub fn revert(&mut self, target: MapStage, now: Timestamp) -> Result<(), CoreError> {
        if target >= self.stage {
            return Err(self.invalid("revert"));
        }
        if target < MapStage::Marking {
            self.points.clear();
        }
        if target < MapStage::GridConfirmed {
            self.calibration = None;
        }
        if target < MapStage::GridProposed {
            self.gridlines.clear();
        }
        self.stage = target;
        self.updated_at = now;
        Ok(())
    }
}
