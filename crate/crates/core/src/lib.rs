//! Deterministic simulator for parallel multi-model object-detection
//! pipelines at the edge.
//!
//! A video stream arriving at `λ` frames per second is split across `n`
//! detection executors, each with its own service rate `μ_i`. A scheduler
//! assigns (or drops) every frame, a sequence synchronizer restores the
//! temporal order and fills dropped frames with the latest processed
//! detections, and the evaluator reports throughput, mAP and FPS per watt.
//!
//! The pipeline runs either in virtual time ([`pipeline::simulate`]),
//! which is fully deterministic, or against the wall clock with one
//! thread per worker ([`realtime::run_wall`]).
//!
//! ```
//! use detsim::planner;
//!
//! assert_eq!(planner::required_models(14.0, 2.5).unwrap(), 6);
//! assert_eq!(planner::model_range(14.0, 2.5, 10.0).unwrap(), (4, 6));
//! ```

#![forbid(unsafe_code)]

pub mod detector;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod ingest;
pub mod pipeline;
pub mod planner;
pub mod realtime;
pub mod report;
pub mod scheduler;
pub mod stream;
pub mod synchronizer;
pub mod synth;

pub use error::{Error, Result};
