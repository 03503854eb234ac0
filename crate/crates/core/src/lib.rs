//! Streaming matrix sketches and the hashing methods built on them.
//!
//! * [`SketchState`] is a Frequent Directions sketch; [`FfdSketcher`]
//!   buffers rows and compresses each full buffer with an [`SrhtOperator`]
//!   before the shrink.
//! * [`CenteringState`] keeps the running mean so that the sketch tracks the
//!   covariance of mean-centered data without revisiting old rows.
//! * [`OnlineHasher`] combines the two into a streaming trainer for
//!   [`HashModel`]s; [`distributed`] merges per-worker summaries.

pub mod centering;
pub mod datagen;
pub mod distributed;
pub mod error;
pub mod eval;
pub mod fd;
pub mod ffd;
pub mod hadamard;
pub mod hashing;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod rng;
pub mod srht;

pub use centering::CenteringState;
pub use distributed::{merge, train_distributed, MergedSketch, Schedule, WorkerSummary};
pub use error::{Error, Result};
pub use fd::SketchState;
pub use ffd::FfdSketcher;
pub use hashing::{
    hamming_rank, lsh_model, train_stream, BinaryCodes, HashModel, OnlineHasher, Sketcher, SketcherKind, TrainConfig,
};
pub use matrix::DenseMatrix;
pub use srht::{BlockedStats, SrhtOperator};
