//! Clients for optional external services: metadata parsers, region
//! detectors and cell OCR.
//!
//! All three speak JSON over HTTP POST. A metadata parser receives the raw
//! PDF (`application/pdf`) and answers with any subset of the metadata
//! fields. Detectors and OCR receive a JSON request carrying the PDF as
//! base64 plus the page geometry and answer with boxes or text. Any
//! transport error, non-2xx status or payload that does not decode is an
//! [`AdapterError`]; callers degrade instead of failing.

use std::time::Duration;

use base64::Engine;
use docmine_core::geom::BBox;
use docmine_core::meta::{MetaFields, SourceCandidate};
use docmine_core::table::CellOcr;
use docmine_core::CoreError;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdapterError {
    #[error("adapter request failed: {0}")]
    Transport(String),
    #[error("adapter returned a malformed payload: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_enabled")]
    pub enabled: bool,
}

fn default_timeout_secs() -> f64 {
    DEFAULT_TIMEOUT.as_secs_f64()
}

fn default_enabled() -> bool {
    true
}

impl EndpointConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into(), timeout_secs: default_timeout_secs(), enabled: true }
    }
}

/// A configured external metadata parser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaParserConfig {
    pub source_id: String,
    /// Lower is more trusted; must differ from every other extractor.
    pub priority: i32,
    #[serde(flatten)]
    pub endpoint: EndpointConfig,
}

/// One blocking JSON-over-HTTP client bound to an endpoint.
#[derive(Debug, Clone)]
pub struct HttpClient {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(cfg: &EndpointConfig) -> Self {
        let timeout = Duration::from_secs_f64(cfg.timeout_secs.max(0.001));
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { endpoint: cfg.endpoint.clone(), agent }
    }

    fn post(&self, content_type: &str, body: &[u8]) -> Result<String, AdapterError> {
        let transport = |e: ureq::Error| AdapterError::Transport(format!("{}: {e}", self.endpoint));
        let mut resp = self.agent.post(&self.endpoint).header("content-type", content_type).send(body).map_err(transport)?;
        resp.body_mut().read_to_string().map_err(transport)
    }

    pub fn post_json<Req: Serialize, Resp: for<'de> Deserialize<'de>>(&self, req: &Req) -> Result<Resp, AdapterError> {
        let body = serde_json::to_vec(req).map_err(|e| AdapterError::Malformed(e.to_string()))?;
        let text = self.post("application/json", &body)?;
        serde_json::from_str(&text).map_err(|e| AdapterError::Malformed(e.to_string()))
    }
}

pub trait MetaParser: Send + Sync {
    fn source_id(&self) -> &str;
    fn priority(&self) -> i32;
    fn parse(&self, pdf: &[u8]) -> Result<MetaFields, AdapterError>;
}

pub struct HttpMetaParser {
    source_id: String,
    priority: i32,
    client: HttpClient,
}

impl HttpMetaParser {
    pub fn new(cfg: &MetaParserConfig) -> Self {
        Self { source_id: cfg.source_id.clone(), priority: cfg.priority, client: HttpClient::new(&cfg.endpoint) }
    }
}

impl MetaParser for HttpMetaParser {
    fn source_id(&self) -> &str {
        &self.source_id
    }

    fn priority(&self) -> i32 {
        self.priority
    }

    fn parse(&self, pdf: &[u8]) -> Result<MetaFields, AdapterError> {
        let text = self.client.post("application/pdf", pdf)?;
        serde_json::from_str(&text).map_err(|e| AdapterError::Malformed(e.to_string()))
    }
}

/// Runs every external parser; failures are dropped, each with a warning.
pub fn external_candidates(parsers: &[Box<dyn MetaParser>], pdf: &[u8]) -> (Vec<SourceCandidate>, Vec<String>) {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for p in parsers {
        match p.parse(pdf) {
            Ok(fields) => out.push(SourceCandidate { source_id: p.source_id().into(), priority: p.priority(), fields }),
            Err(e) => warnings.push(format!("{}: {e}", p.source_id())),
        }
    }
    (out, warnings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Table,
    Map,
}

#[derive(Debug, Serialize)]
struct DetectRequest<'a> {
    kind: RegionKind,
    page_index: usize,
    page_width: f64,
    page_height: f64,
    pdf_base64: &'a str,
}

#[derive(Debug, Deserialize)]
struct DetectResponse {
    regions: Vec<BBox>,
}

/// External region detector for tables or maps.
pub trait RegionDetector: Send + Sync {
    fn detect(&self, kind: RegionKind, pdf: &[u8], page_index: usize, page: &BBox) -> Result<Vec<BBox>, AdapterError>;
}

pub struct HttpRegionDetector {
    client: HttpClient,
}

impl HttpRegionDetector {
    pub fn new(cfg: &EndpointConfig) -> Self {
        Self { client: HttpClient::new(cfg) }
    }
}

impl RegionDetector for HttpRegionDetector {
    fn detect(&self, kind: RegionKind, pdf: &[u8], page_index: usize, page: &BBox) -> Result<Vec<BBox>, AdapterError> {
        let b64 = base64::engine::general_purpose::STANDARD.encode(pdf);
        let req = DetectRequest { kind, page_index, page_width: page.width(), page_height: page.height(), pdf_base64: &b64 };
        let resp: DetectResponse = self.client.post_json(&req)?;
        let valid = resp.regions.iter().all(|r| [r.x0, r.y0, r.x1, r.y1].iter().all(|v| v.is_finite()) && r.x1 > r.x0 && r.y1 > r.y0);
        if !valid {
            return Err(AdapterError::Malformed("degenerate region".into()));
        }
        Ok(resp.regions)
    }
}

#[derive(Debug, Serialize)]
struct OcrRequest<'a> {
    page_index: usize,
    bbox: BBox,
    pdf_base64: &'a str,
}

#[derive(Debug, Deserialize)]
struct OcrResponse {
    text: String,
}

/// External OCR service for cells without a text layer.
pub trait OcrService: Send + Sync {
    fn recognize(&self, pdf: &[u8], page_index: usize, cell: &BBox) -> Result<String, AdapterError>;
}

pub struct HttpOcr {
    client: HttpClient,
}

impl HttpOcr {
    pub fn new(cfg: &EndpointConfig) -> Self {
        Self { client: HttpClient::new(cfg) }
    }
}

impl OcrService for HttpOcr {
    fn recognize(&self, pdf: &[u8], page_index: usize, cell: &BBox) -> Result<String, AdapterError> {
        let b64 = base64::engine::general_purpose::STANDARD.encode(pdf);
        let resp: OcrResponse = self.client.post_json(&OcrRequest { page_index, bbox: *cell, pdf_base64: &b64 })?;
        Ok(resp.text)
    }
}

/// Binds an OCR service to one document for [`CellOcr`].
pub struct DocumentOcr<'a> {
    pub service: &'a dyn OcrService,
    pub pdf: &'a [u8],
}

impl CellOcr for DocumentOcr<'_> {
    fn recognize(&self, page_index: usize, cell: &BBox) -> Result<String, CoreError> {
        self.service.recognize(self.pdf, page_index, cell).map_err(|_| CoreError::OcrClientUnavailable)
    }
}

/// Every external service the store may call.
#[derive(Default)]
pub struct Adapters {
    pub meta_parsers: Vec<Box<dyn MetaParser>>,
    pub table_detector: Option<Box<dyn RegionDetector>>,
    pub map_detector: Option<Box<dyn RegionDetector>>,
    pub ocr: Option<Box<dyn OcrService>>,
}

impl std::fmt::Debug for Adapters {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Adapters")
            .field("meta_parsers", &self.meta_parsers.iter().map(|p| p.source_id().to_string()).collect::<Vec<_>>())
            .field("table_detector", &self.table_detector.is_some())
            .field("map_detector", &self.map_detector.is_some())
            .field("ocr", &self.ocr.is_some())
            .finish()
    }
}
