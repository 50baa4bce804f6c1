//! Page geometry: boxes, text runs, ruling segments and the per-page model.
//!
//! Coordinates are PDF points with the origin at the top-left corner of the
//! page and y growing downward.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// tan(2°): the slope tolerance used to classify segments as axis aligned.
pub const ORIENTATION_TOLERANCE: f64 = 0.034_920_769_491_747_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned rectangle with `x0 <= x1` and `y0 <= y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    /// Builds a box from two arbitrary corners, ordering the coordinates.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            x0: x0.min(x1),
            y0: y0.min(y1),
            x1: x0.max(x1),
            y1: y0.max(y1),
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Closed containment: points on the border are inside.
    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        (x0 <= x1 && y0 <= y1).then_some(BBox { x0, y0, x1, y1 })
    }

    /// Area of the intersection, zero when disjoint.
    pub fn overlap_area(&self, other: &BBox) -> f64 {
        self.intersection(other).map_or(0.0, |b| b.area())
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.overlap_area(other) > 0.0
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn expand(&self, margin: f64) -> BBox {
        BBox {
            x0: self.x0 - margin,
            y0: self.y0 - margin,
            x1: self.x1 + margin,
            y1: self.y1 + margin,
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }

    pub fn clamp_to(&self, width: f64, height: f64) -> BBox {
        BBox {
            x0: self.x0.clamp(0.0, width),
            y0: self.y0.clamp(0.0, height),
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.overlap_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Shortest distance between the two boxes, zero when they touch or overlap.
    pub fn distance(&self, other: &BBox) -> f64 {
        let dx = (other.x0 - self.x1).max(self.x0 - other.x1).max(0.0);
        let dy = (other.y0 - self.y1).max(self.y0 - other.y1).max(0.0);
        libm::hypot(dx, dy)
    }

    pub fn is_finite(&self) -> bool {
        self.x0.is_finite() && self.y0.is_finite() && self.x1.is_finite() && self.y1.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRun {
    pub text: String,
    pub bbox: BBox,
    pub font_size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Horizontal,
    Vertical,
    Other,
}

impl Orientation {
    pub fn classify(start: Point, end: Point) -> Self {
        let dx = (end.x - start.x).abs();
        let dy = (end.y - start.y).abs();
        if dy <= ORIENTATION_TOLERANCE * dx {
            Orientation::Horizontal
        } else if dx <= ORIENTATION_TOLERANCE * dy {
            Orientation::Vertical
        } else {
            Orientation::Other
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub start: Point,
    pub end: Point,
    pub thickness: f64,
    pub orientation: Orientation,
}

impl LineSegment {
    pub fn new(start: Point, end: Point, thickness: f64) -> Self {
        Self {
            start,
            end,
            thickness: thickness.max(0.0),
            orientation: Orientation::classify(start, end),
        }
    }

    pub fn length(&self) -> f64 {
        libm::hypot(self.end.x - self.start.x, self.end.y - self.start.y)
    }

    pub fn midpoint(&self) -> Point {
        Point::new(
            (self.start.x + self.end.x) / 2.0,
            (self.start.y + self.end.y) / 2.0,
        )
    }

    pub fn bbox(&self) -> BBox {
        BBox::new(self.start.x, self.start.y, self.end.x, self.end.y)
    }

    /// Position of the segment across its axis: mean y for horizontal rules,
    /// mean x for vertical ones.
    pub fn axis_position(&self) -> f64 {
        match self.orientation {
            Orientation::Vertical => (self.start.x + self.end.x) / 2.0,
            _ => (self.start.y + self.end.y) / 2.0,
        }
    }

    /// Extent along the segment's own axis as `(lo, hi)`.
    pub fn span(&self) -> (f64, f64) {
        match self.orientation {
            Orientation::Vertical => (
                self.start.y.min(self.end.y),
                self.start.y.max(self.end.y),
            ),
            _ => (
                self.start.x.min(self.end.x),
                self.start.x.max(self.end.x),
            ),
        }
    }

    fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            start: Point::new(self.start.x + dx, self.start.y + dy),
            end: Point::new(self.end.x + dx, self.end.y + dy),
            ..self.clone()
        }
    }

    fn clamped(&self, width: f64, height: f64) -> Self {
        let c = |p: Point| Point::new(p.x.clamp(0.0, width), p.y.clamp(0.0, height));
        Self {
            start: c(self.start),
            end: c(self.end),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageModel {
    pub page_index: usize,
    pub width: f64,
    pub height: f64,
    pub text_runs: Vec<TextRun>,
    pub line_segments: Vec<LineSegment>,
    pub image_regions: Vec<BBox>,
}

impl PageModel {
    pub fn empty(page_index: usize, width: f64, height: f64) -> Self {
        Self {
            page_index,
            width,
            height,
            text_runs: Vec::new(),
            line_segments: Vec::new(),
            image_regions: Vec::new(),
        }
    }

    pub fn bounds(&self) -> BBox {
        BBox::new(0.0, 0.0, self.width, self.height)
    }

    /// A page whose only content is raster imagery. Its text has to come from
    /// an OCR client.
    pub fn is_image_only(&self) -> bool {
        self.text_runs.is_empty() && !self.image_regions.is_empty()
    }

    /// Clamps all contained geometry into the page rectangle.
    pub fn clamp(&mut self) {
        let (w, h) = (self.width, self.height);
        for run in &mut self.text_runs {
            run.bbox = run.bbox.clamp_to(w, h);
        }
        for seg in &mut self.line_segments {
            *seg = seg.clamped(w, h);
        }
        for img in &mut self.image_regions {
            *img = img.clamp_to(w, h);
        }
    }

    /// Runs whose center lies inside `region`, in reading order.
    pub fn runs_in<'a>(&'a self, region: &'a BBox) -> impl Iterator<Item = &'a TextRun> + 'a {
        self.text_runs
            .iter()
            .filter(move |r| region.contains_point(r.bbox.center()))
    }
}

/// Sub-model of everything whose center lies inside `region`, re-based so
/// that the region's top-left corner becomes the origin.
pub fn crop_region(page: &PageModel, region: &BBox) -> Result<PageModel, CoreError> {
    if !(region.width() > 0.0 && region.height() > 0.0) {
        return Err(CoreError::EmptyRegion);
    }
    if page.bounds().intersection(region).is_none_or(|b| b.area() <= 0.0) {
        return Err(CoreError::RegionOutOfPage);
    }
    let (dx, dy) = (-region.x0, -region.y0);
    let mut out = PageModel {
        page_index: page.page_index,
        width: region.width(),
        height: region.height(),
        text_runs: page
            .text_runs
            .iter()
            .filter(|r| region.contains_point(r.bbox.center()))
            .map(|r| TextRun {
                bbox: r.bbox.translate(dx, dy),
                ..r.clone()
            })
            .collect(),
        line_segments: page
            .line_segments
            .iter()
            .filter(|s| region.contains_point(s.midpoint()))
            .map(|s| s.translated(dx, dy))
            .collect(),
        image_regions: page
            .image_regions
            .iter()
            .filter(|b| region.contains_point(b.center()))
            .map(|b| b.translate(dx, dy))
            .collect(),
    };
    out.clamp();
    Ok(out)
}

/// Collapses runs of whitespace to single spaces and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// A visual text line: runs that share a baseline band, sorted left to right.
#[derive(Debug, Clone)]
pub struct TextLine<'a> {
    pub runs: Vec<&'a TextRun>,
    pub bbox: BBox,
}

impl TextLine<'_> {
    pub fn font_size(&self) -> f64 {
        self.runs.iter().map(|r| r.font_size).fold(0.0, f64::max)
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for r in &self.runs {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&r.text);
        }
        out
    }

    /// Largest horizontal gap between neighbouring runs.
    pub fn max_gap(&self) -> f64 {
        self.runs
            .windows(2)
            .map(|w| w[1].bbox.x0 - w[0].bbox.x1)
            .fold(0.0, f64::max)
    }

    /// One contiguous stretch of words (no column-sized gaps).
    pub fn is_prose(&self) -> bool {
        self.max_gap() <= 2.0 * self.font_size()
    }
}

/// Groups runs into lines. Runs join a line when their vertical centers are
/// within half a font size of the line's first run. Lines come back sorted
/// top to bottom.
pub fn group_lines<'a, I>(runs: I) -> Vec<TextLine<'a>>
where
    I: IntoIterator<Item = &'a TextRun>,
{
    let mut sorted: Vec<&TextRun> = runs.into_iter().collect();
    sorted.sort_by(|a, b| {
        a.bbox
            .center()
            .y
            .total_cmp(&b.bbox.center().y)
            .then(a.bbox.x0.total_cmp(&b.bbox.x0))
    });
    let mut lines: Vec<TextLine> = Vec::new();
    for run in sorted {
        let cy = run.bbox.center().y;
        match lines.last_mut() {
            Some(line)
                if (line.runs[0].bbox.center().y - cy).abs()
                    <= 0.5 * line.runs[0].font_size.max(run.font_size) =>
            {
                line.bbox = line.bbox.union(&run.bbox);
                line.runs.push(run);
            }
            _ => lines.push(TextLine {
                runs: alloc::vec![run],
                bbox: run.bbox,
            }),
        }
    }
    for line in &mut lines {
        line.runs.sort_by(|a, b| a.bbox.x0.total_cmp(&b.bbox.x0));
    }
    lines
}
