//! Synthetic scientific-article corpus with ground-truth sidecars.
//!
//! Every fixture is a small born-digital PDF laid out on a Letter page with
//! Courier text (so run widths are known exactly), fully ruled or
//! three-rule tables, and map figures with labelled graticules. The sidecar
//! records what was drawn: runs, segments and images per page, the reading
//! order sections, the expected metadata, each table's region, grid and
//! cell texts, and each map's affine truth.

pub mod pdf;

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use docmine_core::geom::BBox;
use docmine_core::map::Axis;
use docmine_core::table::CellSpan;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use pdf::{r2, text_width, write_pdf, PageDraft, PageTruth, PAGE_HEIGHT, PAGE_WIDTH};

const MARGIN: f64 = 72.0;
const TEXT_WIDTH: f64 = PAGE_WIDTH - 2.0 * MARGIN;
const BODY_SIZE: f64 = 10.0;
const HEADING_SIZE: f64 = 11.0;
const TITLE_SIZE: f64 = 16.0;
const CAPTION_SIZE: f64 = 9.0;
const CELL_SIZE: f64 = 8.0;
const ROW_HEIGHT: f64 = 14.0;
const CELL_PAD: f64 = 6.0;
const LABEL_SIZE: f64 = 6.0;
const MIN_TABLE_WIDTH: f64 = 260.0;
const HEADER_FILLER: &[&str] = &["data", "ppm", "and", "wt", "mean"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaTruth {
    pub title: String,
    pub authors: Vec<String>,
    pub venue: String,
    pub year: i32,
    pub doi: String,
    pub abstract_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ruling {
    /// Every row and column boundary is drawn.
    Full,
    /// Top, below-header and bottom rules only.
    Booktabs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableTruth {
    pub page_index: usize,
    pub region: BBox,
    pub ruling: Ruling,
    pub row_bounds: Vec<f64>,
    pub col_bounds: Vec<f64>,
    pub merges: Vec<CellSpan>,
    /// Row-major cell texts; cells covered by a merge other than its
    /// top-left are empty.
    pub cells: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisTruth {
    pub slope: f64,
    pub intercept: f64,
}

impl AxisTruth {
    pub fn apply(&self, pos: f64) -> f64 {
        self.slope * pos + self.intercept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTruth {
    pub axis: Axis,
    /// Offset from the region's left (longitude) or top (latitude) edge.
    pub pixel_pos: f64,
    pub value: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapTruth {
    pub page_index: usize,
    pub region: BBox,
    pub longitude: AxisTruth,
    pub latitude: AxisTruth,
    pub gridlines: Vec<GridTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureTruth {
    pub name: String,
    pub meta: MetaTruth,
    pub pages: Vec<PageTruth>,
    pub sections: Vec<String>,
    pub tables: Vec<TableTruth>,
    pub maps: Vec<MapTruth>,
    /// Unlabelled images that must not be taken for maps.
    pub photos: Vec<(usize, BBox)>,
}

impl FixtureTruth {
    /// Regions that hold no prose: tables, and maps widened by their label band.
    pub fn non_prose_zones(&self) -> Vec<(usize, BBox)> {
        let mut out: Vec<(usize, BBox)> = self.tables.iter().map(|t| (t.page_index, t.region)).collect();
        out.extend(self.maps.iter().map(|m| (m.page_index, m.region.expand(docmine_core::map::LABEL_BAND))));
        out
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub truth: FixtureTruth,
    pub pdf: Vec<u8>,
}

impl Fixture {
    /// Writes `<name>.pdf` and `<name>.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.pdf", self.truth.name)), &self.pdf)?;
        let json = serde_json::to_vec_pretty(&self.truth).map_err(io::Error::other)?;
        std::fs::write(dir.join(format!("{}.json", self.truth.name)), json)
    }
}

/// A table to lay out: row-major texts, an optional two-column merge in the
/// header row starting at the given column, and the ruling style.
#[derive(Debug, Clone)]
pub struct TableSpec {
    pub caption: String,
    pub cells: Vec<Vec<String>>,
    pub header_merge: Option<usize>,
    pub ruling: Ruling,
}

/// A map figure: image size, gridline offsets and values per axis.
#[derive(Debug, Clone)]
pub struct MapSpec {
    pub caption: String,
    pub width: f64,
    pub height: f64,
    pub x_offset: f64,
    /// (offset from left edge, longitude) per vertical line.
    pub longitudes: Vec<(f64, f64)>,
    /// (offset from top edge, latitude) per horizontal line.
    pub latitudes: Vec<(f64, f64)>,
}

/// Formats a coordinate as a margin label, e.g. `96°30'W` or `12°S`.
pub fn format_label(value: f64, axis: Axis) -> String {
    let hemi = match (axis, value.partial_cmp(&0.0)) {
        (_, Some(std::cmp::Ordering::Equal)) => "",
        (Axis::Longitude, Some(std::cmp::Ordering::Less)) => "W",
        (Axis::Longitude, _) => "E",
        (Axis::Latitude, Some(std::cmp::Ordering::Less)) => "S",
        (Axis::Latitude, _) => "N",
    };
    let total_minutes = (value.abs() * 60.0).round() as i64;
    let (deg, min) = (total_minutes / 60, total_minutes % 60);
    if min == 0 {
        format!("{deg}°{hemi}")
    } else {
        format!("{deg}°{min:02}'{hemi}")
    }
}

fn wrap(text: &str, size: f64) -> Vec<String> {
    let max_chars = (TEXT_WIDTH / (pdf::CHAR_WIDTH * size)).floor() as usize;
    let mut lines: Vec<String> = Vec::new();
    let mut current = String::new();
    for word in text.split_whitespace() {
        if !current.is_empty() && current.chars().count() + 1 + word.chars().count() > max_chars {
            lines.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(word);
    }
    if !current.is_empty() {
        lines.push(current);
    }
    lines
}

/// Single-column flow layout that records truth as it draws.
struct Layout {
    pages: Vec<PageDraft>,
    y: f64,
    sections: Vec<String>,
    tables: Vec<TableTruth>,
    maps: Vec<MapTruth>,
    photos: Vec<(usize, BBox)>,
}

impl Layout {
    fn new() -> Self {
        Self { pages: vec![PageDraft::default()], y: MARGIN, sections: Vec::new(), tables: Vec::new(), maps: Vec::new(), photos: Vec::new() }
    }

    fn page_index(&self) -> usize {
        self.pages.len() - 1
    }

    fn page(&mut self) -> &mut PageDraft {
        self.pages.last_mut().expect("at least one page")
    }

    fn reserve(&mut self, height: f64) {
        if self.y + height > PAGE_HEIGHT - MARGIN {
            self.pages.push(PageDraft::default());
            self.y = MARGIN;
        }
    }

    fn block_height(lines: usize, size: f64) -> f64 {
        lines as f64 * 1.2 * size
    }

    /// A paragraph block; blocks are separated by a full font size of space.
    fn block(&mut self, text: &str, size: f64) {
        let lines = wrap(text, size);
        self.reserve(Self::block_height(lines.len(), size));
        for line in &lines {
            let baseline = self.y + 0.8 * size;
            self.page().text(MARGIN, baseline, size, line);
            self.y = r2(self.y + 1.2 * size);
        }
        self.y = r2(self.y + 0.8 * size);
        self.sections.push(lines.join(" "));
    }

    fn table(&mut self, spec: &TableSpec) {
        let mut texts = spec.cells.clone();
        let rows = texts.len();
        let cols = texts[0].len();
        assert!(texts.iter().all(|r| r.len() == cols));
        let merged = |r: usize, c: usize| spec.header_merge.is_some_and(|m| r == 0 && (c == m || c == m + 1));

        let mut widths: Vec<f64> = (0..cols)
            .map(|c| {
                let widest = (0..rows)
                    .filter(|&r| !merged(r, c))
                    .map(|r| text_width(&texts[r][c], CELL_SIZE))
                    .fold(0.0, f64::max);
                (widest + 4.0 * CELL_PAD).ceil().max(36.0)
            })
            .collect();
        if let Some(m) = spec.header_merge {
            let header = text_width(&texts[0][m], CELL_SIZE);
            let w = widths[m].max(widths[m + 1]).max(((header + 2.0 * CELL_PAD) / 2.0).ceil());
            widths[m] = w;
            widths[m + 1] = w;
        }
        let total: f64 = widths.iter().sum();
        if total < MIN_TABLE_WIDTH {
            // Widen only unmerged columns so a spanning header stays centred
            // on the whitespace between the columns it covers.
            let free: Vec<usize> = (0..cols).filter(|&c| !merged(0, c)).collect();
            let pad = ((MIN_TABLE_WIDTH - total) / free.len() as f64).ceil();
            free.iter().for_each(|&c| widths[c] += pad);
        }
        if let Some(m) = spec.header_merge {
            // A spanning header reaches across most of both columns.
            let target = 2.0 * widths[m] - 2.0 * CELL_PAD;
            let mut filler = HEADER_FILLER.iter().cycle();
            loop {
                let longer = format!("{} {}", texts[0][m], filler.next().unwrap());
                if text_width(&longer, CELL_SIZE) > target {
                    break;
                }
                texts[0][m] = longer;
            }
        }
        let total: f64 = widths.iter().sum();
        assert!(total <= TEXT_WIDTH, "table too wide: {total}");

        let caption_lines = wrap(&spec.caption, CAPTION_SIZE).len();
        self.reserve(Self::block_height(caption_lines, CAPTION_SIZE) + 0.8 * CAPTION_SIZE + rows as f64 * ROW_HEIGHT);
        self.block(&spec.caption, CAPTION_SIZE);

        let x0 = MARGIN + ((TEXT_WIDTH - total) / 2.0).round();
        let top = self.y;
        let row_bounds: Vec<f64> = (0..=rows).map(|r| r2(top + r as f64 * ROW_HEIGHT)).collect();
        let mut col_bounds = vec![x0];
        for w in &widths {
            col_bounds.push(col_bounds.last().unwrap() + w);
        }
        let (left, right, bottom) = (x0, *col_bounds.last().unwrap(), *row_bounds.last().unwrap());
        let page_index = self.page_index();

        let mut cells = vec![vec![String::new(); cols]; rows];
        let mut runs: Vec<(usize, bool, BBox)> = Vec::new(); // (col, part of merge, bbox)
        for r in 0..rows {
            let baseline = row_bounds[r] + 0.5 * ROW_HEIGHT + 0.3 * CELL_SIZE;
            for c in 0..cols {
                let text = &texts[r][c];
                if merged(r, c) && Some(c) != spec.header_merge {
                    continue;
                }
                if text.is_empty() {
                    continue;
                }
                let x = if merged(r, c) {
                    (col_bounds[c] + col_bounds[c + 2]) / 2.0 - text_width(text, CELL_SIZE) / 2.0
                } else {
                    col_bounds[c] + CELL_PAD
                };
                let run = self.pages.last_mut().unwrap().text(x, baseline, CELL_SIZE, text);
                runs.push((c, merged(r, c), BBox::new(run.x0, run.y0, run.x1, run.y1)));
                cells[r][c] = text.clone();
            }
        }

        let page = self.pages.last_mut().unwrap();
        let truth_cols = match spec.ruling {
            Ruling::Full => {
                for y in &row_bounds {
                    page.line(left, *y, right, *y, 0.5);
                }
                for r in 0..rows {
                    for (j, x) in col_bounds.iter().enumerate() {
                        if j > 0 && j < cols && merged(r, j - 1) && merged(r, j) {
                            continue;
                        }
                        page.line(*x, row_bounds[r], *x, row_bounds[r + 1], 0.5);
                    }
                }
                col_bounds.clone()
            }
            Ruling::Booktabs => {
                page.line(left, top, right, top, 1.0);
                page.line(left, row_bounds[1], right, row_bounds[1], 0.5);
                page.line(left, bottom, right, bottom, 1.0);
                let mut bounds = vec![left];
                for j in 1..cols {
                    let extent = |col: usize| runs.iter().filter(move |(c, m, _)| *c == col && !m).map(|(_, _, b)| *b);
                    let lhs = extent(j - 1).map(|b| b.x1).fold(f64::NEG_INFINITY, f64::max);
                    let rhs = extent(j).map(|b| b.x0).fold(f64::INFINITY, f64::min);
                    bounds.push((lhs + rhs) / 2.0);
                }
                bounds.push(right);
                bounds
            }
        };
        self.tables.push(TableTruth {
            page_index,
            region: BBox::new(left, top, right, bottom),
            ruling: spec.ruling,
            row_bounds,
            col_bounds: truth_cols,
            merges: spec.header_merge.map(|m| CellSpan::new(0, m, 0, m + 1)).into_iter().collect(),
            cells,
        });
        self.y = r2(bottom + 1.4 * BODY_SIZE);
    }

    fn map(&mut self, spec: &MapSpec) {
        let caption_lines = wrap(&spec.caption, CAPTION_SIZE).len();
        self.reserve(16.0 + spec.height + 20.0 + Self::block_height(caption_lines, CAPTION_SIZE));
        let x0 = MARGIN + spec.x_offset;
        let y0 = r2(self.y + 16.0);
        let region = BBox::new(x0, y0, x0 + spec.width, y0 + spec.height);
        let page_index = self.page_index();
        let page = self.page();
        page.image(region);
        let mut gridlines = Vec::new();
        for &(dx, value) in &spec.longitudes {
            let x = x0 + dx;
            page.line(x, region.y0, x, region.y1, 0.5);
            let label = format_label(value, Axis::Longitude);
            let w = text_width(&label, LABEL_SIZE);
            page.text(x - w / 2.0, region.y1 + 2.0 + 0.8 * LABEL_SIZE, LABEL_SIZE, &label);
            gridlines.push(GridTruth { axis: Axis::Longitude, pixel_pos: dx, value, label });
        }
        for &(dy, value) in &spec.latitudes {
            let y = y0 + dy;
            page.line(region.x0, y, region.x1, y, 0.5);
            let label = format_label(value, Axis::Latitude);
            let w = text_width(&label, LABEL_SIZE);
            page.text(region.x0 - 2.0 - w, y + 0.3 * LABEL_SIZE, LABEL_SIZE, &label);
            gridlines.push(GridTruth { axis: Axis::Latitude, pixel_pos: dy, value, label });
        }
        let fit = |pairs: &[(f64, f64)]| {
            let (p0, v0) = pairs[0];
            let (p1, v1) = pairs[pairs.len() - 1];
            let slope = (v1 - v0) / (p1 - p0);
            AxisTruth { slope, intercept: v0 - slope * p0 }
        };
        self.maps.push(MapTruth {
            page_index,
            region,
            longitude: fit(&spec.longitudes),
            latitude: fit(&spec.latitudes),
            gridlines,
        });
        self.y = r2(region.y1 + 20.0);
        self.block(&spec.caption, CAPTION_SIZE);
    }

    fn photo(&mut self, caption: &str, width: f64, height: f64) {
        self.reserve(16.0 + height + 20.0 + 2.0 * CAPTION_SIZE);
        let x0 = MARGIN + ((TEXT_WIDTH - width) / 2.0).round();
        let region = BBox::new(x0, r2(self.y + 16.0), x0 + width, r2(self.y + 16.0 + height));
        self.page().image(region);
        self.photos.push((self.page_index(), region));
        self.y = r2(region.y1 + 20.0);
        self.block(caption, CAPTION_SIZE);
    }

    fn front_matter(&mut self, meta: &MetaTruth) {
        self.block(&meta.title, TITLE_SIZE);
        self.block(&meta.authors.join(", "), BODY_SIZE);
        self.block(&format!("{}, {}, doi:{}", meta.venue, meta.year, meta.doi), BODY_SIZE);
        self.block("Abstract", HEADING_SIZE);
        self.block(&meta.abstract_text, BODY_SIZE);
    }

    fn finish(self, name: &str, meta: MetaTruth) -> Fixture {
        let pages: Vec<PageTruth> = self.pages.iter().map(|p| p.truth.clone()).collect();
        let pdf = write_pdf(self.pages, &meta.title);
        Fixture {
            truth: FixtureTruth {
                name: name.into(),
                meta,
                pages,
                sections: self.sections,
                tables: self.tables,
                maps: self.maps,
                photos: self.photos,
            },
            pdf,
        }
    }
}

/// Equally spaced gridlines: `n` lines from `inset` with the given spacing,
/// values starting at `first` and stepping by `step`.
fn graticule(n: usize, inset: f64, spacing: f64, first: f64, step: f64) -> Vec<(f64, f64)> {
    (0..n).map(|i| (inset + i as f64 * spacing, first + i as f64 * step)).collect()
}

/// Title of the first fixture.
pub const GOLDEN_TITLE: &str = "Detrital zircon U–Pb geochronology and geochemistry of the Riachuelos and Palma Sola beach sediments, Veracruz State, Gulf of Mexico: a new insight on palaeoenvironment";

/// Fixture document #1, built without randomness. The end-to-end pipeline
/// test runs on it.
pub fn golden_document() -> Fixture {
    let meta = MetaTruth {
        title: GOLDEN_TITLE.into(),
        authors: vec!["Marisol Quintero-Aldana".into(), "Tobias Renkfield".into(), "Priya Ashcombe".into()],
        venue: "Journal of Coastal Sedimentology".into(),
        year: 2020,
        doi: "10.5555/jcs.2020.0417".into(),
        abstract_text: "Detrital zircon grains from the Riachuelos and Palma Sola beaches record sediment supply \
            from the Trans-Mexican Volcanic Belt and older basement sources. U-Pb ages and trace element \
            compositions constrain provenance and the palaeoenvironment of the coastal plain."
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" "),
    };
    let mut l = Layout::new();
    l.front_matter(&meta);
    l.block("1. Introduction", HEADING_SIZE);
    l.block(
        "Beach sands were sampled along the central Veracruz coast. The Palma Sola beach lies near 19°46'N, \
         96°25'W and the Riachuelos beach lies to the north. Both beaches receive sediment from short rivers \
         draining volcanic highlands.",
        BODY_SIZE,
    );
    l.block("2. Results", HEADING_SIZE);
    l.block(
        "Concordant zircon ages for the four beach samples are listed in Table 1. Ages are weighted means of \
         the youngest concordant grain population in each sample.",
        BODY_SIZE,
    );
    let rows = [
        ["Sample ID", "Age (Ma)", "Error", "Th/U"],
        ["PS-01", "18.4", "0.6", "0.42"],
        ["PS-02", "21.7", "0.8", "0.37"],
        ["RI-01", "312.5", "4.1", "0.55"],
        ["RI-02", "1024.0", "12.3", "0.61"],
    ];
    l.table(&TableSpec {
        caption: "Table 1. U-Pb ages of detrital zircon from beach sands.".into(),
        cells: rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        header_merge: None,
        ruling: Ruling::Full,
    });
    l.block(
        "Sample locations were read from the georeferenced study area map. Coordinates are given in decimal \
         degrees on the WGS84 datum.",
        BODY_SIZE,
    );
    l.map(&MapSpec {
        caption: "Figure 1. Study area with the Palma Sola and Riachuelos sampling sites.".into(),
        width: 280.0,
        height: 200.0,
        x_offset: 90.0,
        longitudes: graticule(3, 20.0, 120.0, -96.75, 0.25),
        latitudes: graticule(3, 20.0, 80.0, 20.0, -1.0),
    });
    l.block("3. Conclusions", HEADING_SIZE);
    l.block(
        "The young zircon population ties the Palma Sola sands to nearby volcanic sources, while the older \
         grains at Riachuelos point to recycled basement material.",
        BODY_SIZE,
    );
    l.finish("doc01", meta)
}

const SURNAMES: &[&str] = &[
    "Almeric", "Brandvold", "Castellane", "Dovrin", "Eskerud", "Faraday-Lowe", "Galdrin", "Holmquist", "Ibarrola",
    "Jenssor", "Kestrel", "Lindqvar", "Moravec", "Norrland", "Ostrava", "Pellworth", "Quarles", "Ravensby",
    "Sandoval-Rue", "Thornquist", "Ulvang", "Vashti", "Wendmark", "Yarrow",
];
const INITIALS: &[&str] = &["A.", "B.", "C. M.", "D.", "E. J.", "F.", "G.", "H. L.", "K.", "L.", "M. R.", "N.", "P.", "R.", "S. T.", "V."];
const JOURNALS: &[&str] = &[
    "Journal of Sedimentary Provenance",
    "Basin Research Letters",
    "Geochronology and Tectonics",
    "Marine Geology Reports",
    "Quaternary Coastal Studies",
    "Precambrian Crust Review",
];
const PLACES: &[&str] = &["Tethys", "Arvika", "Sierra Blanca", "Lago Verde", "Koster Ridge", "Mendel Basin", "Oruma", "Palma Sola"];
const FEATURES: &[&str] = &["beach sands", "turbidites", "river terraces", "carbonate platform", "ophiolite", "delta front"];
const TOPICS: &[&str] = &[
    "Detrital zircon geochronology",
    "Provenance of heavy minerals",
    "Stable isotope stratigraphy",
    "Geochemistry and petrography",
    "Palaeomagnetic constraints",
];
const WORDS: &[&str] = &[
    "samples", "were", "collected", "from", "the", "upper", "section", "and", "analysed", "for", "major", "trace",
    "element", "composition", "zircon", "grains", "show", "oscillatory", "zoning", "with", "concordant", "ages",
    "that", "cluster", "around", "distinct", "populations", "sediment", "transport", "along", "coast", "suggests",
    "mixed", "sources", "basement", "volcanic", "arc", "during", "deposition", "of", "unit", "in", "basin",
];
const COLUMN_NAMES: &[&str] = &["Age", "U", "Th", "Pb", "Th/U", "Depth", "Error", "SiO2", "Zr", "Hf", "Unit", "Site", "d18O", "Age (Ma)", "Rb/Sr"];
const GROUP_NAMES: &[&str] = &["Isotopes", "Ratios", "Ages (Ma)", "Major oxides", "Trace"];

fn sentence(rng: &mut ChaCha8Rng, words: usize) -> String {
    let mut s: Vec<&str> = (0..words).map(|_| *WORDS.choose(rng).unwrap()).collect();
    let first = s[0];
    let mut out = String::new();
    out.push_str(&first[..1].to_uppercase());
    out.push_str(&first[1..]);
    s.remove(0);
    for w in s {
        out.push(' ');
        out.push_str(w);
    }
    out.push('.');
    out
}

fn paragraph(rng: &mut ChaCha8Rng, sentences: usize) -> String {
    let parts: Vec<String> = (0..sentences)
        .map(|_| {
            let n = rng.random_range(8..16);
            sentence(rng, n)
        })
        .collect();
    parts.join(" ")
}

fn random_meta(rng: &mut ChaCha8Rng) -> MetaTruth {
    let place = *PLACES.choose(rng).unwrap();
    let title = format!("{} of the {} {}", TOPICS.choose(rng).unwrap(), place, FEATURES.choose(rng).unwrap());
    let n = rng.random_range(1..=4);
    let mut authors: Vec<String> = Vec::new();
    while authors.len() < n {
        let name = format!("{} {}", INITIALS.choose(rng).unwrap(), SURNAMES.choose(rng).unwrap());
        if !authors.contains(&name) {
            authors.push(name);
        }
    }
    let year = rng.random_range(1975..=2024);
    MetaTruth {
        title,
        authors,
        venue: JOURNALS.choose(rng).unwrap().to_string(),
        year,
        doi: format!("10.{}/{}.{}.{:03}", rng.random_range(1000..99999), "geo", year, rng.random_range(1..999)),
        abstract_text: paragraph(rng, 3),
    }
}

fn random_number(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    loop {
        let s = match rng.random_range(0..3) {
            0 => format!("{:.1}", rng.random_range(0.0..2000.0)),
            1 => format!("{:.2}", rng.random_range(0.0..10.0)),
            _ => format!("{}", rng.random_range(1..5000)),
        };
        if s.len() <= max_len {
            return s;
        }
    }
}

fn random_table(rng: &mut ChaCha8Rng, index: usize, ruling: Ruling) -> TableSpec {
    let cols = rng.random_range(2..=8);
    let rows = rng.random_range(2..=10);
    let max_len = if cols >= 7 { 7 } else { 10 };
    let prefix: String = (0..2).map(|_| rng.random_range(b'A'..=b'Z') as char).collect();
    let mut names: Vec<&str> = COLUMN_NAMES.iter().copied().filter(|n| n.len() <= max_len).collect();
    let mut header = vec![if cols >= 7 { "Sample".to_string() } else { "Sample ID".to_string() }];
    for _ in 1..cols {
        let i = rng.random_range(0..names.len());
        header.push(names.remove(i).to_string());
    }
    let mut cells = vec![header];
    for r in 1..rows {
        let mut row = vec![format!("{prefix}-{r:02}")];
        for _ in 1..cols {
            row.push(random_number(rng, max_len));
        }
        cells.push(row);
    }
    let header_merge = (cols >= 3 && rng.random_bool(0.4)).then(|| {
        let c = rng.random_range(1..cols - 1);
        let group = GROUP_NAMES.iter().copied().filter(|g| g.len() <= max_len + 4).collect::<Vec<_>>();
        cells[0][c] = group.choose(rng).unwrap().to_string();
        cells[0][c + 1] = String::new();
        c
    });
    TableSpec {
        caption: format!("Table {}. {}", index, sentence(rng, 6)),
        cells,
        header_merge,
        ruling,
    }
}

fn random_map(rng: &mut ChaCha8Rng, index: usize) -> MapSpec {
    let width = rng.random_range(220..=300) as f64;
    let height = rng.random_range(150..=220) as f64;
    let n_lon = rng.random_range(2..=5usize);
    let n_lat = rng.random_range(2..=4usize);
    let inset_x = rng.random_range(8..=20) as f64;
    let inset_y = rng.random_range(8..=20) as f64;
    let spacing_x = ((width - 2.0 * inset_x) / (n_lon - 1) as f64).floor();
    let spacing_y = ((height - 2.0 * inset_y) / (n_lat - 1) as f64).floor();
    let step_lon = *[0.25, 0.5, 1.0, 2.0, 5.0].choose(rng).unwrap();
    let step_lat = *[1.0, 2.0, 5.0].choose(rng).unwrap();
    let lon0 = (rng.random_range(-170.0f64..(170.0 - 5.0 * step_lon)) / step_lon).round() * step_lon;
    let lat0 = rng.random_range(-60..=70) as f64;
    MapSpec {
        caption: format!("Figure {}. {}", index, sentence(rng, 7)),
        width,
        height,
        x_offset: rng.random_range(40..=(TEXT_WIDTH - width) as i64) as f64,
        longitudes: graticule(n_lon, inset_x, spacing_x, lon0, step_lon),
        latitudes: graticule(n_lat, inset_y, spacing_y, lat0, -step_lat),
    }
}

fn coordinate_sentence(rng: &mut ChaCha8Rng) -> String {
    let lat = rng.random_range(0..80);
    let lon = rng.random_range(0..170);
    let mut s = String::new();
    let _ = write!(
        s,
        "The type locality lies at {}°{:02}'{}, {}°{:02}'{} on the regional map.",
        lat,
        rng.random_range(0..60),
        if rng.random_bool(0.5) { "N" } else { "S" },
        lon,
        rng.random_range(0..60),
        if rng.random_bool(0.5) { "E" } else { "W" },
    );
    s
}

/// One random fixture. `index` is 1-based and names the file.
pub fn random_document(index: usize, rng: &mut ChaCha8Rng) -> Fixture {
    let meta = random_meta(rng);
    let mut l = Layout::new();
    l.front_matter(&meta);
    l.block("1. Introduction", HEADING_SIZE);
    let intro = format!("{} {}", paragraph(rng, 2), coordinate_sentence(rng));
    l.block(&intro, BODY_SIZE);
    l.block("2. Results", HEADING_SIZE);

    let n_tables = rng.random_range(1..=3);
    let mut figure = 1;
    for t in 1..=n_tables {
        let ruling = if t == 1 || rng.random_bool(0.6) { Ruling::Full } else { Ruling::Booktabs };
        // Every table follows a full paragraph, so stacked tables are never adjacent.
        l.block(&paragraph(rng, 2), BODY_SIZE);
        let spec = random_table(rng, t, ruling);
        l.table(&spec);
        if rng.random_bool(0.3) {
            let spec = random_map(rng, figure);
            figure += 1;
            l.block(&paragraph(rng, 1), BODY_SIZE);
            l.map(&spec);
        }
    }
    if figure == 1 && rng.random_bool(0.5) {
        let spec = random_map(rng, figure);
        figure += 1;
        l.map(&spec);
    }
    if rng.random_bool(0.3) {
        l.photo(&format!("Figure {}. Outcrop photograph of the sampled unit.", figure), 180.0, 120.0);
    }
    l.block("3. Conclusions", HEADING_SIZE);
    l.block(&paragraph(rng, 2), BODY_SIZE);
    l.finish(&format!("doc{index:02}"), meta)
}

/// The fixture corpus: the golden document followed by `count - 1` random
/// documents, each seeded from `seed` and its index.
pub fn generate_corpus(seed: u64, count: usize) -> Vec<Fixture> {
    let mut out = Vec::with_capacity(count);
    if count > 0 {
        out.push(golden_document());
    }
    for index in 2..=count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
        out.push(random_document(index, &mut rng));
    }
    out
}

/// Default corpus size and seed used by the tests and the CLI.
pub const DEFAULT_COUNT: usize = 24;
pub const DEFAULT_SEED: u64 = 2020;
