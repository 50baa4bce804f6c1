//! Runtime side of docmine: PDF ingest, the synthetic fixture corpus, the
//! persistent project store, dataset exports and the HTTP service.

pub mod ingest;
pub mod adapters;
pub mod api;
pub mod config;
pub mod export;
pub mod fixture;
pub mod rules;
pub mod store;
