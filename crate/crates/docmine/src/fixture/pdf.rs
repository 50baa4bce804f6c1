//! Minimal PDF writer for fixtures: Courier text, stroked lines and a
//! placeholder image, all recorded into a ground-truth page model as they
//! are drawn.

use docmine_core::geom::BBox;
use lopdf::content::{Content, Operation};
use lopdf::{dictionary, Document, Encoding, Object, Stream, StringFormat};
use serde::{Deserialize, Serialize};

pub const PAGE_WIDTH: f64 = 612.0;
pub const PAGE_HEIGHT: f64 = 792.0;
/// Courier advance width as a fraction of the font size.
pub const CHAR_WIDTH: f64 = 0.6;

/// Rounds to the two decimals every fixture coordinate is written with.
pub fn r2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Width of `text` set in Courier at `size`.
pub fn text_width(text: &str, size: f64) -> f64 {
    CHAR_WIDTH * size * text.chars().count() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTruth {
    pub text: String,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub font_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTruth {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageTruth {
    pub width: f64,
    pub height: f64,
    pub runs: Vec<RunTruth>,
    pub segments: Vec<SegmentTruth>,
    pub images: Vec<BBox>,
}

/// One page under construction. Coordinates are top-left based, in points.
pub struct PageDraft {
    ops: Vec<Operation>,
    pub truth: PageTruth,
}

impl Default for PageDraft {
    fn default() -> Self {
        Self {
            ops: Vec::new(),
            truth: PageTruth { width: PAGE_WIDTH, height: PAGE_HEIGHT, runs: Vec::new(), segments: Vec::new(), images: Vec::new() },
        }
    }
}

fn real(v: f64) -> Object {
    Object::Real(r2(v) as f32)
}

impl PageDraft {
    /// Sets `text` with its baseline at `baseline` (top-left frame) starting at `x`.
    ///
    /// Panics on characters outside WinAnsi; fixture text is static.
    pub fn text(&mut self, x: f64, baseline: f64, size: f64, text: &str) -> RunTruth {
        let (x, baseline) = (r2(x), r2(baseline));
        let bytes = Document::encode_text(&Encoding::SimpleEncoding(b"WinAnsiEncoding"), text);
        assert_eq!(bytes.len(), text.chars().count(), "not encodable in WinAnsi: {text:?}");
        self.ops.extend([
            Operation::new("BT", vec![]),
            Operation::new("Tf", vec![Object::Name(b"F1".to_vec()), real(size)]),
            Operation::new("Tm", vec![1.into(), 0.into(), 0.into(), 1.into(), real(x), real(PAGE_HEIGHT - baseline)]),
            Operation::new("Tj", vec![Object::String(bytes, StringFormat::Literal)]),
            Operation::new("ET", vec![]),
        ]);
        let run = RunTruth {
            text: text.to_string(),
            x0: x,
            y0: baseline - 0.8 * size,
            x1: x + text_width(text, size),
            y1: baseline + 0.2 * size,
            font_size: size,
        };
        self.truth.runs.push(run.clone());
        run
    }

    pub fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, width: f64) {
        let (x0, y0, x1, y1) = (r2(x0), r2(y0), r2(x1), r2(y1));
        self.ops.extend([
            Operation::new("w", vec![real(width)]),
            Operation::new("m", vec![real(x0), real(PAGE_HEIGHT - y0)]),
            Operation::new("l", vec![real(x1), real(PAGE_HEIGHT - y1)]),
            Operation::new("S", vec![]),
        ]);
        self.truth.segments.push(SegmentTruth { x0, y0, x1, y1, thickness: width });
    }

    /// Paints the placeholder image over `bbox`.
    pub fn image(&mut self, bbox: BBox) {
        let b = BBox::new(r2(bbox.x0), r2(bbox.y0), r2(bbox.x1), r2(bbox.y1));
        self.ops.extend([
            Operation::new("q", vec![]),
            Operation::new("cm", vec![real(b.width()), 0.into(), 0.into(), real(b.height()), real(b.x0), real(PAGE_HEIGHT - b.y1)]),
            Operation::new("Do", vec![Object::Name(b"Im1".to_vec())]),
            Operation::new("Q", vec![]),
        ]);
        self.truth.images.push(b);
    }
}

/// Serializes pages into a PDF document.
pub fn write_pdf(pages: Vec<PageDraft>, title: &str) -> Vec<u8> {
    let mut doc = Document::with_version("1.5");
    let pages_id = doc.new_object_id();
    let font_id = doc.add_object(dictionary! {
        "Type" => "Font",
        "Subtype" => "Type1",
        "BaseFont" => "Courier",
        "Encoding" => "WinAnsiEncoding",
    });
    let image_id = doc.add_object(Stream::new(
        dictionary! {
            "Type" => "XObject",
            "Subtype" => "Image",
            "Width" => 1,
            "Height" => 1,
            "ColorSpace" => "DeviceGray",
            "BitsPerComponent" => 8,
        },
        vec![0x80],
    ));
    let resources_id = doc.add_object(dictionary! {
        "Font" => dictionary! { "F1" => font_id },
        "XObject" => dictionary! { "Im1" => image_id },
    });
    let mut kids = Vec::new();
    for page in pages {
        let content = Content { operations: page.ops }.encode().expect("content encodes");
        let content_id = doc.add_object(Stream::new(dictionary! {}, content));
        let page_id = doc.add_object(dictionary! {
            "Type" => "Page",
            "Parent" => pages_id,
            "Contents" => content_id,
            "Resources" => resources_id,
        });
        kids.push(Object::Reference(page_id));
    }
    let count = kids.len() as i64;
    doc.objects.insert(
        pages_id,
        Object::Dictionary(dictionary! {
            "Type" => "Pages",
            "Kids" => kids,
            "Count" => count,
            "MediaBox" => vec![0.into(), 0.into(), (PAGE_WIDTH as i64).into(), (PAGE_HEIGHT as i64).into()],
        }),
    );
    let catalog_id = doc.add_object(dictionary! { "Type" => "Catalog", "Pages" => pages_id });
    let info_id = doc.add_object(dictionary! {
        "Title" => Object::string_literal(title),
        "Producer" => Object::string_literal("docmine fixtures"),
    });
    doc.trailer.set("Root", catalog_id);
    doc.trailer.set("Info", info_id);
    let mut out = Vec::new();
    doc.save_to(&mut out).expect("in-memory write");
    out
}
