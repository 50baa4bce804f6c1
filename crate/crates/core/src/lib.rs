//! Extraction, staging and integration logic for annotating scientific PDFs.
//!
//! The crate is `no_std` with `alloc`: it works on an already-parsed
//! [`geom::PageModel`] and leaves file IO, HTTP and persistence to the
//! `docmine` crate.

#![no_std]

extern crate alloc;

pub mod correction;
pub mod error;
pub mod geom;
pub mod integrate;
pub mod lock;
pub mod map;
pub mod meta;
pub mod search;
pub mod table;
pub mod text;
pub mod time;

pub use error::CoreError;
