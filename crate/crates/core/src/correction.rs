//! Human adjustments to machine proposals, kept as training feedback.

use alloc::string::String;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::lock::UserId;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Module {
    Meta,
    Table,
    Text,
    Map,
}

/// What changed, before it is stamped with an id, user and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    pub module: Module,
    pub artifact_id: Option<String>,
    pub stage: String,
    pub before: Value,
    pub after: Value,
}

impl Adjustment {
    pub fn new(module: Module, artifact_id: Option<&str>, stage: &str, before: Value, after: Value) -> Self {
        Self {
            module,
            artifact_id: artifact_id.map(String::from),
            stage: stage.into(),
            before,
            after,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionEvent {
    pub event_id: u64,
    pub doc_id: String,
    pub module: Module,
    pub artifact_id: Option<String>,
    pub stage: String,
    pub before: Value,
    pub after: Value,
    pub user: UserId,
    pub time: Timestamp,
}

impl CorrectionEvent {
    pub fn from_adjustment(event_id: u64, doc_id: &str, adj: Adjustment, user: &UserId, time: Timestamp) -> Self {
        Self {
            event_id,
            doc_id: doc_id.into(),
            module: adj.module,
            artifact_id: adj.artifact_id,
            stage: adj.stage,
            before: adj.before,
            after: adj.after,
            user: user.clone(),
            time,
        }
    }
}

pub(crate) fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}
