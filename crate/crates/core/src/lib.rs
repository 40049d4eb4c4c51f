//! Spatial semantic scene graphs for traffic recordings, and graph-network
//! models that predict per-participant longitudinal acceleration one second
//! ahead.
//!
//! The pipeline: [`ingest`] parses and cleans track recordings, [`lanemap`]
//! provides lane geometry and Frenet projections, [`scenegraph`] turns each
//! frame into a typed relation graph, [`diffcore`] supplies dense tensors
//! with reverse-mode gradients, [`models`] implements the single-step and
//! recurrent predictors, [`trainer`] and [`evaluator`] run the optimization
//! protocol and the metric reports, and [`synthgen`] generates deterministic
//! synthetic benchmarks so the whole stack is testable without licensed
//! datasets.
//!
//! The crate is `no_std` (with `alloc`); all file formats are produced and
//! consumed as in-memory strings. Actual IO lives in the companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod diffcore;
pub mod error;
pub mod evaluator;
pub mod geom;
pub mod ingest;
pub mod lanemap;
pub mod models;
pub mod scenegraph;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
