//! Service configuration: one TOML file plus `DOCMINE_*` environment
//! overrides.
//!
//! ```toml
//! bind = "127.0.0.1:8080"
//! store_path = "docmine-data"
//! lease_secs = 600
//! session_ttl_secs = 43200
//! bcrypt_cost = 12
//! heuristic_priority = 0
//!
//! [table]
//! separator_merge = 3.0
//! gap_factor = 1.5
//! merge_cross_ratio = 0.5
//!
//! [map]
//! residual_tolerance = 0.25
//!
//! [[meta_parsers]]
//! source_id = "grobid"
//! priority = 1
//! endpoint = "http://localhost:8070/meta"
//!
//! [ocr]
//! endpoint = "http://localhost:8090/ocr"
//! timeout_secs = 10
//! ```
//!
//! Recognized environment variables: `DOCMINE_BIND`, `DOCMINE_STORE_PATH`,
//! `DOCMINE_LEASE_SECS`, `DOCMINE_SESSION_TTL_SECS`, `DOCMINE_BCRYPT_COST`,
//! `DOCMINE_SEPARATOR_MERGE`, `DOCMINE_GAP_FACTOR`, `DOCMINE_MERGE_CROSS_RATIO`,
//! `DOCMINE_RESIDUAL_TOLERANCE`, `DOCMINE_TABLE_DETECTOR_URL`,
//! `DOCMINE_MAP_DETECTOR_URL` and `DOCMINE_OCR_URL`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use docmine_core::map::DEFAULT_RESIDUAL_TOLERANCE;
use docmine_core::meta::HEURISTIC_PRIORITY;
use docmine_core::table::TableConfig;
use docmine_core::time::Duration;
use serde::{Deserialize, Serialize};

use crate::adapters::{Adapters, EndpointConfig, HttpMetaParser, HttpOcr, HttpRegionDetector, MetaParser, MetaParserConfig};
use crate::store::StoreSettings;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("environment variable {name}: cannot parse `{value}`")]
    Env { name: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSettings {
    pub residual_tolerance: f64,
}

impl Default for MapSettings {
    fn default() -> Self {
        Self { residual_tolerance: DEFAULT_RESIDUAL_TOLERANCE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bind: String,
    pub store_path: PathBuf,
    pub lease_secs: i64,
    pub session_ttl_secs: i64,
    pub bcrypt_cost: u32,
    pub heuristic_priority: i32,
    pub table: TableConfig,
    pub map: MapSettings,
    pub meta_parsers: Vec<MetaParserConfig>,
    pub table_detector: Option<EndpointConfig>,
    pub map_detector: Option<EndpointConfig>,
    pub ocr: Option<EndpointConfig>,
}

impl Default for Config {
    fn default() -> Self {
        let s = StoreSettings::default();
        Self {
            bind: "127.0.0.1:8080".into(),
            store_path: PathBuf::from("docmine-data"),
            lease_secs: s.lease.0 / 1000,
            session_ttl_secs: s.session_ttl.0 / 1000,
            bcrypt_cost: s.bcrypt_cost,
            heuristic_priority: HEURISTIC_PRIORITY,
            table: TableConfig::default(),
            map: MapSettings::default(),
            meta_parsers: Vec::new(),
            table_detector: None,
            map_detector: None,
            ocr: None,
        }
    }
}

fn env_parse<T: std::str::FromStr>(env: &BTreeMap<String, String>, name: &str, slot: &mut T) -> Result<(), ConfigError> {
    if let Some(v) = env.get(name) {
        *slot = v.trim().parse().map_err(|_| ConfigError::Env { name: name.into(), value: v.clone() })?;
    }
    Ok(())
}

fn env_endpoint(env: &BTreeMap<String, String>, name: &str, slot: &mut Option<EndpointConfig>) {
    match env.get(name).map(|v| v.trim()) {
        Some("") => *slot = None,
        Some(url) => match slot {
            Some(cfg) => cfg.endpoint = url.into(),
            None => *slot = Some(EndpointConfig::new(url)),
        },
        None => {}
    }
}

impl Config {
    /// Reads the file when given, then applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.into(), source })?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        let env: BTreeMap<String, String> = std::env::vars().filter(|(k, _)| k.starts_with("DOCMINE_")).collect();
        let cfg = base.with_env(&env)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn with_env(mut self, env: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        env_parse(env, "DOCMINE_BIND", &mut self.bind)?;
        env_parse(env, "DOCMINE_STORE_PATH", &mut self.store_path)?;
        env_parse(env, "DOCMINE_LEASE_SECS", &mut self.lease_secs)?;
        env_parse(env, "DOCMINE_SESSION_TTL_SECS", &mut self.session_ttl_secs)?;
        env_parse(env, "DOCMINE_BCRYPT_COST", &mut self.bcrypt_cost)?;
        env_parse(env, "DOCMINE_SEPARATOR_MERGE", &mut self.table.separator_merge)?;
        env_parse(env, "DOCMINE_GAP_FACTOR", &mut self.table.gap_factor)?;
        env_parse(env, "DOCMINE_MERGE_CROSS_RATIO", &mut self.table.merge_cross_ratio)?;
        env_parse(env, "DOCMINE_RESIDUAL_TOLERANCE", &mut self.map.residual_tolerance)?;
        env_endpoint(env, "DOCMINE_TABLE_DETECTOR_URL", &mut self.table_detector);
        env_endpoint(env, "DOCMINE_MAP_DETECTOR_URL", &mut self.map_detector);
        env_endpoint(env, "DOCMINE_OCR_URL", &mut self.ocr);
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.lease_secs <= 0 || self.session_ttl_secs <= 0 {
            return invalid("lease_secs and session_ttl_secs must be positive".into());
        }
        if !(4..=31).contains(&self.bcrypt_cost) {
            return invalid(format!("bcrypt_cost {} outside 4..=31", self.bcrypt_cost));
        }
        let t = &self.table;
        let positive = [t.separator_merge, t.gap_factor, t.merge_cross_ratio, t.min_rule_fraction, self.map.residual_tolerance];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return invalid("detector constants must be positive and finite".into());
        }
        let mut priorities = BTreeSet::from([self.heuristic_priority]);
        let mut ids = BTreeSet::from(["heuristic"]);
        for p in &self.meta_parsers {
            if !priorities.insert(p.priority) {
                return invalid(format!("metadata parser `{}` reuses priority {}", p.source_id, p.priority));
            }
            if !ids.insert(p.source_id.as_str()) {
                return invalid(format!("duplicate metadata parser `{}`", p.source_id));
            }
        }
        let endpoints = self.meta_parsers.iter().map(|p| &p.endpoint).chain(&self.table_detector).chain(&self.map_detector).chain(&self.ocr);
        for e in endpoints {
            if !(e.endpoint.starts_with("http://") || e.endpoint.starts_with("https://")) {
                return invalid(format!("endpoint `{}` is not an http(s) URL", e.endpoint));
            }
            if !e.timeout_secs.is_finite() || e.timeout_secs <= 0.0 {
                return invalid(format!("endpoint `{}` needs a positive timeout", e.endpoint));
            }
        }
        Ok(())
    }

    pub fn store_settings(&self) -> StoreSettings {
        StoreSettings {
            lease: Duration::from_secs(self.lease_secs),
            session_ttl: Duration::from_secs(self.session_ttl_secs),
            bcrypt_cost: self.bcrypt_cost,
            table: self.table,
            residual_tolerance: self.map.residual_tolerance,
            heuristic_priority: self.heuristic_priority,
            ..StoreSettings::default()
        }
    }

    /// HTTP clients for every enabled endpoint.
    pub fn adapters(&self) -> Adapters {
        let enabled = |e: &Option<EndpointConfig>| e.as_ref().filter(|e| e.enabled).cloned();
        Adapters {
            meta_parsers: self
                .meta_parsers
                .iter()
                .filter(|p| p.endpoint.enabled)
                .map(|p| Box::new(HttpMetaParser::new(p)) as Box<dyn MetaParser>)
                .collect(),
            table_detector: enabled(&self.table_detector).map(|e| Box::new(HttpRegionDetector::new(&e)) as _),
            map_detector: enabled(&self.map_detector).map(|e| Box::new(HttpRegionDetector::new(&e)) as _),
            ocr: enabled(&self.ocr).map(|e| Box::new(HttpOcr::new(&e)) as _),
        }
    }
}
