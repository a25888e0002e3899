//! Core library for querytrack: a toolkit that turns per-frame 3D detections
//! into identity-stable tracks, describes each track's motion relative to the
//! ego vehicle, captions tracks with a pluggable captioner, scores captions
//! against a free-form text query, and selects the matching tracks without a
//! hand-tuned threshold. Ships with a synthetic scene generator and a HOTA
//! evaluator so the whole chain can be exercised hermetically.

pub mod caption;
pub mod config;
pub mod descriptor;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod ingest;
pub mod matching;
pub mod pipeline;
pub mod remote;
pub mod render;
pub mod scene;
pub mod select;
pub mod tracker;

pub use error::{Error, Result};
