//! IO, file formats and pipelines on top of `wsmil-core`.
//!
//! * manifest: one JSON object per line, `{slide_id, label, n_patches, feature_file}`
//! * feature files: CSV `patch_id,x,y,f0..f{d-1}[,gt]`
//! * checkpoints: versioned JSON holding layer dims, weights, Adam state and
//!   the framework config
//! * heatmaps: binary PGM plus a `patch_id,x,y,score` CSV

pub mod checkpoint;
pub mod config;
mod error;
pub mod features;
pub mod heatmap;
pub mod manifest;
pub mod pipeline;

pub use error::{Error, Result};
