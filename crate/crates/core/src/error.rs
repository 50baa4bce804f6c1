use alloc::string::String;
use thiserror::Error;

use crate::lock::UserId;
use crate::time::Timestamp;

/// Every failure the extraction, integration and locking routines can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("region has zero area")]
    EmptyRegion,
    #[error("region lies outside the page")]
    RegionOutOfPage,
    #[error("no metadata candidates to merge")]
    NoCandidates,
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("operation `{op}` is not allowed at stage {stage}")]
    InvalidStage { op: &'static str, stage: &'static str },
    #[error("region holds no text runs and no rules")]
    NoContent,
    #[error("invalid structure edit: {0}")]
    InvalidEdit(String),
    #[error("page is image-only and no OCR client is configured")]
    OcrClientUnavailable,
    #[error("no logical cell at ({row}, {col})")]
    UnknownCell { row: usize, col: usize },
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("invalid span offsets {start}..{end}")]
    InvalidOffsets { start: usize, end: usize },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("unknown span `{0}`")]
    UnknownSpan(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("unparseable coordinate label `{0}`")]
    UnparseableLabel(String),
    #[error("invalid gridline value: {0}")]
    InvalidValue(String),
    #[error("unknown gridline index {0}")]
    UnknownLine(usize),
    #[error("axis {0} needs at least two gridlines")]
    InsufficientLines(&'static str),
    #[error("all {0} gridlines share one position")]
    DegenerateAxis(&'static str),
    #[error("unknown marked point `{0}`")]
    UnknownPoint(String),
    #[error("map is not calibrated")]
    NotCalibrated,
    #[error("point lies outside the map region")]
    OutOfRegion,
    #[error("project has no header configuration")]
    NoHeaderConfig,
    #[error("table `{0}` maps fields but not the key field")]
    KeyFieldUnmapped(String),
    #[error("header row is empty")]
    EmptyHeaderRow,
    #[error("duplicate field `{0}`")]
    DuplicateField(String),
    #[error("key field `{0}` removed without designating a new key")]
    KeyRemoved(String),
    #[error("dataset for `{0}` was built under a different header; re-integrate it")]
    HeaderMismatch(String),
    #[error("caller does not hold the edit lock")]
    NotLocked,
    #[error("file is locked by {holder} until {expires_at}")]
    LockHeld { holder: UserId, expires_at: Timestamp },
    #[error("file is in the charge of {0}")]
    PrincipalHeld(UserId),
}
