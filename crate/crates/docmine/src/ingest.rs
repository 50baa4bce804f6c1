//! PDF bytes to [`PageModel`]s.
//!
//! A small content-stream interpreter on top of `lopdf`: it tracks the
//! graphics and text state, emits one text run per show operation, turns
//! stroked paths and hairline-thin filled rectangles into line segments, and
//! records where images are painted. Output coordinates are points with the
//! origin at the top-left of the media box.

use std::collections::BTreeMap;

use docmine_core::geom::{BBox, LineSegment, PageModel, Point, TextRun};
use docmine_core::geom::normalize_whitespace;
use lopdf::content::{Content, Operation};
use lopdf::{Dictionary, Document, Encoding, Object, ObjectId};
use sha2::{Digest, Sha256};

/// Nesting limit for form XObjects.
const MAX_FORM_DEPTH: usize = 8;
/// Filled rectangles thinner than this (pt) are drawn rules.
const RULE_THICKNESS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("malformed PDF: {0}")]
    MalformedPdf(String),
    #[error("PDF is password-protected")]
    EncryptedPdf,
}

/// An uploaded document and its content hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentSource {
    pub doc_id: String,
    pub filename: String,
    pub bytes: Vec<u8>,
    pub checksum: String,
    pub page_count: usize,
}

impl DocumentSource {
    pub fn new(doc_id: impl Into<String>, filename: impl Into<String>, bytes: Vec<u8>) -> Self {
        let checksum = checksum(&bytes);
        Self { doc_id: doc_id.into(), filename: filename.into(), bytes, checksum, page_count: 0 }
    }

    /// Parses the bytes and records the page count.
    pub fn parse(&mut self) -> Result<Vec<PageModel>, IngestError> {
        let pages = parse_pdf(&self.bytes)?;
        self.page_count = pages.len();
        Ok(pages)
    }
}

/// Lower-case hex SHA-256.
pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

type Matrix = [f64; 6];

const IDENTITY: Matrix = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];

/// `a` then `b` in PDF's row-vector convention.
fn mul(a: &Matrix, b: &Matrix) -> Matrix {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
        a[4] * b[0] + a[5] * b[2] + b[4],
        a[4] * b[1] + a[5] * b[3] + b[5],
    ]
}

fn apply(m: &Matrix, x: f64, y: f64) -> (f64, f64) {
    (m[0] * x + m[2] * y + m[4], m[1] * x + m[3] * y + m[5])
}

fn translate(tx: f64, ty: f64) -> Matrix {
    [1.0, 0.0, 0.0, 1.0, tx, ty]
}

/// Numbers pass through `f32` inside lopdf; rounding to 1e-4 recovers the
/// decimal that was written.
fn num(o: &Object) -> Option<f64> {
    match o {
        Object::Integer(i) => Some(*i as f64),
        Object::Real(r) => Some(((*r as f64) * 1e4).round() / 1e4),
        _ => None,
    }
}

fn nums(ops: &[Object]) -> Option<Vec<f64>> {
    ops.iter().map(num).collect()
}

fn matrix_of(ops: &[Object]) -> Option<Matrix> {
    let v = nums(ops)?;
    (v.len() == 6).then(|| [v[0], v[1], v[2], v[3], v[4], v[5]])
}

fn deref<'a>(doc: &'a Document, o: &'a Object) -> &'a Object {
    doc.dereference(o).map(|(_, o)| o).unwrap_or(o)
}

/// A stack of resource dictionaries searched innermost first.
#[derive(Clone)]
struct Resources<'a> {
    dicts: Vec<&'a Dictionary>,
}

impl<'a> Resources<'a> {
    fn lookup(&self, doc: &'a Document, category: &[u8], name: &[u8]) -> Option<&'a Object> {
        self.dicts.iter().find_map(|d| {
            let cat = deref(doc, d.get(category).ok()?).as_dict().ok()?;
            Some(deref(doc, cat.get(name).ok()?))
        })
    }

    fn with(&self, inner: Option<&'a Dictionary>) -> Self {
        let mut dicts = Vec::with_capacity(self.dicts.len() + 1);
        dicts.extend(inner);
        dicts.extend(self.dicts.iter().copied());
        Self { dicts }
    }
}

struct Font<'a> {
    encoding: Encoding<'a>,
    first_char: i64,
    widths: Vec<f64>,
    missing_width: f64,
    two_byte: bool,
}

impl<'a> Font<'a> {
    fn load(doc: &'a Document, dict: &'a Dictionary) -> Self {
        let base = dict.get(b"BaseFont").and_then(Object::as_name).unwrap_or(b"");
        let subtype = dict.get(b"Subtype").and_then(Object::as_name).unwrap_or(b"");
        let two_byte = subtype == b"Type0";
        let monospace = base.windows(7).any(|w| w == b"Courier");
        let first_char = dict.get(b"FirstChar").ok().and_then(|o| o.as_i64().ok()).unwrap_or(0);
        let widths = dict
            .get(b"Widths")
            .ok()
            .map(|o| deref(doc, o))
            .and_then(|o| o.as_array().ok())
            .map(|a| a.iter().map(|w| num(deref(doc, w)).unwrap_or(0.0)).collect())
            .unwrap_or_default();
        let missing_width = if two_byte {
            dict.get(b"DW").ok().and_then(num).unwrap_or(1000.0)
        } else if monospace {
            600.0
        } else {
            500.0
        };
        let encoding = dict
            .get_font_encoding(doc)
            .unwrap_or(Encoding::SimpleEncoding(b"WinAnsiEncoding"));
        Self { encoding, first_char, widths, missing_width, two_byte }
    }

    fn codes(&self, bytes: &[u8]) -> Vec<u32> {
        if self.two_byte {
            bytes.chunks(2).map(|c| c.iter().fold(0u32, |acc, b| (acc << 8) | *b as u32)).collect()
        } else {
            bytes.iter().map(|b| *b as u32).collect()
        }
    }

    /// Glyph width in thousandths of text-space units.
    fn width(&self, code: u32) -> f64 {
        let idx = code as i64 - self.first_char;
        if idx >= 0 {
            if let Some(w) = self.widths.get(idx as usize) {
                return *w;
            }
        }
        self.missing_width
    }

    fn decode(&self, bytes: &[u8]) -> String {
        Document::decode_text(&self.encoding, bytes).unwrap_or_else(|_| String::from_utf8_lossy(bytes).into_owned())
    }
}

#[derive(Clone)]
struct TextState {
    font: Option<Vec<u8>>,
    size: f64,
    char_spacing: f64,
    word_spacing: f64,
    hscale: f64,
    leading: f64,
    rise: f64,
}

impl Default for TextState {
    fn default() -> Self {
        Self { font: None, size: 0.0, char_spacing: 0.0, word_spacing: 0.0, hscale: 1.0, leading: 0.0, rise: 0.0 }
    }
}

#[derive(Clone)]
struct GState {
    ctm: Matrix,
    line_width: f64,
    text: TextState,
}

struct Interpreter<'a> {
    doc: &'a Document,
    fonts: BTreeMap<Vec<u8>, Font<'a>>,
    /// Media box as (llx, ury), used to flip into top-left coordinates.
    origin: (f64, f64),
    runs: Vec<TextRun>,
    segments: Vec<LineSegment>,
    images: Vec<BBox>,
}

/// One subpath in device space.
#[derive(Default)]
struct SubPath {
    points: Vec<(f64, f64)>,
    closed: bool,
}

impl<'a> Interpreter<'a> {
    fn to_page(&self, (x, y): (f64, f64)) -> Point {
        Point::new(x - self.origin.0, self.origin.1 - y)
    }

    fn font(&mut self, res: &Resources<'a>, name: &[u8]) -> Option<&Font<'a>> {
        if !self.fonts.contains_key(name) {
            let dict = res.lookup(self.doc, b"Font", name)?.as_dict().ok()?;
            self.fonts.insert(name.to_vec(), Font::load(self.doc, dict));
        }
        self.fonts.get(name)
    }

    fn show(&mut self, res: &Resources<'a>, gs: &GState, tm: &mut Matrix, parts: &[Object]) {
        let ts = gs.text.clone();
        let Some(font_name) = ts.font.clone() else { return };
        let Some(font) = self.font(res, &font_name) else { return };
        let mut text = String::new();
        let mut advance = 0.0;
        for part in parts {
            match part {
                Object::String(bytes, _) => {
                    for code in font.codes(bytes) {
                        let w = font.width(code) / 1000.0 * ts.size;
                        let spacing = ts.char_spacing + if code == 32 && !font.two_byte { ts.word_spacing } else { 0.0 };
                        advance += (w + spacing) * ts.hscale;
                    }
                    text.push_str(&font.decode(bytes));
                }
                other => {
                    if let Some(adj) = num(other) {
                        advance -= adj / 1000.0 * ts.size * ts.hscale;
                        // a kern this wide is a word space
                        if adj < -200.0 && !text.ends_with(' ') {
                            text.push(' ');
                        }
                    }
                }
            }
        }
        let m = mul(tm, &gs.ctm);
        let text = normalize_whitespace(&text);
        if !text.is_empty() && ts.size > 0.0 {
            let lo = ts.rise - 0.2 * ts.size;
            let hi = ts.rise + 0.8 * ts.size;
            let corners = [(0.0, lo), (advance, lo), (0.0, hi), (advance, hi)].map(|(x, y)| self.to_page(apply(&m, x, y)));
            let bbox = corners[1..].iter().fold(BBox::new(corners[0].x, corners[0].y, corners[0].x, corners[0].y), |b, p| {
                b.union(&BBox::new(p.x, p.y, p.x, p.y))
            });
            let scale = (m[2] * m[2] + m[3] * m[3]).sqrt();
            self.runs.push(TextRun { text, bbox, font_size: ts.size * scale });
        }
        *tm = mul(&translate(advance, 0.0), tm);
    }

    fn stroke(&mut self, path: &[SubPath], width: f64) {
        for sp in path {
            let mut pts: Vec<(f64, f64)> = sp.points.clone();
            if sp.closed && pts.len() > 2 {
                pts.push(pts[0]);
            }
            for w in pts.windows(2) {
                if w[0] != w[1] {
                    self.segments.push(LineSegment::new(self.to_page(w[0]), self.to_page(w[1]), width));
                }
            }
        }
    }

    /// Filled thin rectangles become rules along their long axis.
    fn fill(&mut self, path: &[SubPath]) {
        for sp in path {
            if !(sp.points.len() == 4 || (sp.points.len() == 5 && sp.points[4] == sp.points[0])) {
                continue;
            }
            let b = sp.points[..4]
                .iter()
                .map(|p| self.to_page(*p))
                .fold(None::<BBox>, |acc, p| {
                    let pb = BBox::new(p.x, p.y, p.x, p.y);
                    Some(acc.map_or(pb, |a| a.union(&pb)))
                })
                .expect("four points");
            let (w, h) = (b.width(), b.height());
            if h <= RULE_THICKNESS && w > 2.0 * h && w > 0.0 {
                let y = (b.y0 + b.y1) / 2.0;
                self.segments.push(LineSegment::new(Point::new(b.x0, y), Point::new(b.x1, y), h));
            } else if w <= RULE_THICKNESS && h > 2.0 * w && h > 0.0 {
                let x = (b.x0 + b.x1) / 2.0;
                self.segments.push(LineSegment::new(Point::new(x, b.y0), Point::new(x, b.y1), w));
            }
        }
    }

    fn unit_square(&mut self, ctm: &Matrix) {
        let pts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)].map(|(x, y)| self.to_page(apply(ctm, x, y)));
        let b = pts[1..].iter().fold(BBox::new(pts[0].x, pts[0].y, pts[0].x, pts[0].y), |b, p| b.union(&BBox::new(p.x, p.y, p.x, p.y)));
        if b.area() > 0.0 {
            self.images.push(b);
        }
    }

    fn run(&mut self, ops: &[Operation], res: &Resources<'a>, base: GState, depth: usize) {
        let mut gs = base;
        let mut stack: Vec<GState> = Vec::new();
        let mut path: Vec<SubPath> = Vec::new();
        let mut tm = IDENTITY;
        let mut tlm = IDENTITY;
        for op in ops {
            let o = &op.operands;
            match op.operator.as_str() {
                "q" => stack.push(gs.clone()),
                "Q" => {
                    if let Some(prev) = stack.pop() {
                        gs = prev;
                    }
                }
                "cm" => {
                    if let Some(m) = matrix_of(o) {
                        gs.ctm = mul(&m, &gs.ctm);
                    }
                }
                "w" => {
                    if let Some(w) = o.first().and_then(num) {
                        gs.line_width = w;
                    }
                }
                "m" => {
                    if let Some(v) = nums(o).filter(|v| v.len() == 2) {
                        path.push(SubPath { points: vec![apply(&gs.ctm, v[0], v[1])], closed: false });
                    }
                }
                "l" => {
                    if let Some(v) = nums(o).filter(|v| v.len() == 2) {
                        let p = apply(&gs.ctm, v[0], v[1]);
                        match path.last_mut() {
                            Some(sp) if !sp.closed => sp.points.push(p),
                            _ => path.push(SubPath { points: vec![p], closed: false }),
                        }
                    }
                }
                "c" | "v" | "y" => {
                    // Curves are not rules; keep the current point so later
                    // lines start in the right place.
                    if let Some(v) = nums(o).filter(|v| v.len() >= 4) {
                        let p = apply(&gs.ctm, v[v.len() - 2], v[v.len() - 1]);
                        path.push(SubPath { points: vec![p], closed: false });
                    }
                }
                "h" => {
                    if let Some(sp) = path.last_mut() {
                        sp.closed = true;
                    }
                }
                "re" => {
                    if let Some(v) = nums(o).filter(|v| v.len() == 4) {
                        let (x, y, w, h) = (v[0], v[1], v[2], v[3]);
                        let pts = [(x, y), (x + w, y), (x + w, y + h), (x, y + h)];
                        path.push(SubPath { points: pts.iter().map(|&(a, b)| apply(&gs.ctm, a, b)).collect(), closed: true });
                    }
                }
                "S" | "s" => {
                    if op.operator == "s" {
                        if let Some(sp) = path.last_mut() {
                            sp.closed = true;
                        }
                    }
                    let scale = ((gs.ctm[0] * gs.ctm[3] - gs.ctm[1] * gs.ctm[2]).abs()).sqrt();
                    self.stroke(&path, gs.line_width * scale);
                    path.clear();
                }
                "f" | "F" | "f*" => {
                    self.fill(&path);
                    path.clear();
                }
                "B" | "B*" | "b" | "b*" => {
                    let scale = ((gs.ctm[0] * gs.ctm[3] - gs.ctm[1] * gs.ctm[2]).abs()).sqrt();
                    self.stroke(&path, gs.line_width * scale);
                    path.clear();
                }
                "n" => path.clear(),
                "BT" => {
                    tm = IDENTITY;
                    tlm = IDENTITY;
                }
                "Tf" => {
                    if let (Some(name), Some(size)) = (o.first().and_then(|n| n.as_name().ok()), o.get(1).and_then(num)) {
                        gs.text.font = Some(name.to_vec());
                        gs.text.size = size;
                    }
                }
                "Tc" => gs.text.char_spacing = o.first().and_then(num).unwrap_or(0.0),
                "Tw" => gs.text.word_spacing = o.first().and_then(num).unwrap_or(0.0),
                "Tz" => gs.text.hscale = o.first().and_then(num).unwrap_or(100.0) / 100.0,
                "TL" => gs.text.leading = o.first().and_then(num).unwrap_or(0.0),
                "Ts" => gs.text.rise = o.first().and_then(num).unwrap_or(0.0),
                "Td" | "TD" => {
                    if let Some(v) = nums(o).filter(|v| v.len() == 2) {
                        if op.operator == "TD" {
                            gs.text.leading = -v[1];
                        }
                        tlm = mul(&translate(v[0], v[1]), &tlm);
                        tm = tlm;
                    }
                }
                "Tm" => {
                    if let Some(m) = matrix_of(o) {
                        tlm = m;
                        tm = m;
                    }
                }
                "T*" => {
                    tlm = mul(&translate(0.0, -gs.text.leading), &tlm);
                    tm = tlm;
                }
                "Tj" => self.show(res, &gs, &mut tm, o),
                "TJ" => {
                    if let Some(Ok(arr)) = o.first().map(Object::as_array) {
                        let arr = arr.clone();
                        self.show(res, &gs, &mut tm, &arr);
                    }
                }
                "'" | "\"" => {
                    if op.operator == "\"" {
                        if let Some(v) = nums(&o[..o.len().min(2)]) {
                            if v.len() == 2 {
                                gs.text.word_spacing = v[0];
                                gs.text.char_spacing = v[1];
                            }
                        }
                    }
                    tlm = mul(&translate(0.0, -gs.text.leading), &tlm);
                    tm = tlm;
                    if let Some(s) = o.last() {
                        self.show(res, &gs, &mut tm, std::slice::from_ref(s));
                    }
                }
                "Do" => {
                    let Some(name) = o.first().and_then(|n| n.as_name().ok()) else { continue };
                    let Some(Ok(stream)) = res.lookup(self.doc, b"XObject", name).map(Object::as_stream) else { continue };
                    match stream.dict.get(b"Subtype").and_then(Object::as_name) {
                        Ok(b"Image") => self.unit_square(&gs.ctm),
                        Ok(b"Form") if depth < MAX_FORM_DEPTH => {
                            let m = stream.dict.get(b"Matrix").ok().and_then(|m| m.as_array().ok()).and_then(|a| matrix_of(a)).unwrap_or(IDENTITY);
                            let inner = stream.dict.get(b"Resources").ok().and_then(|r| deref(self.doc, r).as_dict().ok());
                            let bytes = stream.decompressed_content().unwrap_or_else(|_| stream.content.clone());
                            if let Ok(content) = Content::decode(&bytes) {
                                let mut child = gs.clone();
                                child.ctm = mul(&m, &gs.ctm);
                                self.run(&content.operations, &res.with(inner), child, depth + 1);
                            }
                        }
                        _ => {}
                    }
                }
                "BI" | "EI" => self.unit_square(&gs.ctm.clone()),
                _ => {}
            }
        }
    }
}

fn media_box(doc: &Document, page_id: ObjectId) -> [f64; 4] {
    let mut id = Some(page_id);
    let mut guard = 0;
    while let Some(cur) = id {
        let Ok(dict) = doc.get_dictionary(cur) else { break };
        if let Ok(b) = dict.get(b"MediaBox") {
            if let Some(v) = deref(doc, b).as_array().ok().and_then(|a| nums(a)).filter(|v| v.len() == 4) {
                return [v[0].min(v[2]), v[1].min(v[3]), v[0].max(v[2]), v[1].max(v[3])];
            }
        }
        id = dict.get(b"Parent").and_then(Object::as_reference).ok();
        guard += 1;
        if guard > 64 {
            break;
        }
    }
    [0.0, 0.0, 612.0, 792.0]
}

fn load(bytes: &[u8]) -> Result<Document, IngestError> {
    let declares_encryption = bytes.windows(8).any(|w| w == b"/Encrypt");
    match Document::load_mem(bytes) {
        Ok(doc) => {
            if doc.trailer.get(b"Encrypt").is_ok() && !doc.was_encrypted() {
                return Err(IngestError::EncryptedPdf);
            }
            Ok(doc)
        }
        Err(lopdf::Error::InvalidPassword) => Err(IngestError::EncryptedPdf),
        Err(_) if declares_encryption => Err(IngestError::EncryptedPdf),
        Err(e) => Err(IngestError::MalformedPdf(e.to_string())),
    }
}

/// Parses every page. Deterministic for identical bytes.
pub fn parse_pdf(bytes: &[u8]) -> Result<Vec<PageModel>, IngestError> {
    let doc = load(bytes)?;
    let mut pages = Vec::new();
    for (index, (_, page_id)) in doc.get_pages().into_iter().enumerate() {
        let mb = media_box(&doc, page_id);
        let (own, inherited) = doc
            .get_page_resources(page_id)
            .map_err(|e| IngestError::MalformedPdf(e.to_string()))?;
        let mut dicts: Vec<&Dictionary> = own.into_iter().collect();
        dicts.extend(inherited.iter().filter_map(|id| doc.get_dictionary(*id).ok()));
        let res = Resources { dicts };
        let content = doc
            .get_and_decode_page_content(page_id)
            .map_err(|e| IngestError::MalformedPdf(e.to_string()))?;
        let mut it = Interpreter {
            doc: &doc,
            fonts: BTreeMap::new(),
            origin: (mb[0], mb[3]),
            runs: Vec::new(),
            segments: Vec::new(),
            images: Vec::new(),
        };
        let gs = GState { ctm: IDENTITY, line_width: 1.0, text: TextState::default() };
        it.run(&content.operations, &res, gs, 0);
        let mut page = PageModel::empty(index, mb[2] - mb[0], mb[3] - mb[1]);
        page.text_runs = it.runs;
        page.line_segments = it.segments;
        page.image_regions = it.images;
        page.clamp();
        pages.push(page);
    }
    if pages.is_empty() && doc.objects.is_empty() {
        return Err(IngestError::MalformedPdf("no objects".into()));
    }
    Ok(pages)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_composition_matches_hand_calculation() {
        let scale = [2.0, 0.0, 0.0, 2.0, 0.0, 0.0];
        let shift = translate(10.0, 5.0);
        // scale first, then shift
        assert_eq!(apply(&mul(&scale, &shift), 1.0, 1.0), (12.0, 7.0));
        assert_eq!(apply(&mul(&shift, &scale), 1.0, 1.0), (22.0, 12.0));
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(parse_pdf(b"not a pdf"), Err(IngestError::MalformedPdf(_))));
        assert!(matches!(parse_pdf(b""), Err(IngestError::MalformedPdf(_))));
    }

    #[test]
    fn checksum_is_stable_hex() {
        assert_eq!(checksum(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
