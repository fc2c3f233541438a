//! Daily mobility motif mining from geo-located point records anchored to
//! land-use parcels.

pub mod annotate;
pub mod error;
pub mod geometry;
pub mod ingest;
pub mod motif;
pub mod output;
pub mod parcel_index;
pub mod pipeline;
pub mod shape_stats;
pub mod synth;

pub use error::{Error, Result};
