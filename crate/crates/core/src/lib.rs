//! Worst-case timing analysis for wormhole-switched networks-on-chip.
//!
//! The crate computes per-flow end-to-end delay bounds with deterministic
//! network calculus, modelling the head-of-line and backpressure blocking
//! that wormhole switching introduces:
//!
//! * [`minplus`] — closed-form algebra over arrival and service curves,
//! * [`config`] / [`model`] — the JSON input schema, the linked network
//!   model and its validation rules,
//! * [`blocking`] — direct and indirect blocking flow sets, including the
//!   buffer-aware subpaths that shrink as input buffers grow,
//! * [`analysis`] — per-router residual service curves, burst propagation
//!   and the end-to-end delay bounds,
//! * [`sim`] — a flit-level simulator used to cross-validate the bounds,
//! * [`synth`] — synthetic instance generation for tests and benchmarks.

pub mod analysis;
pub mod blocking;
pub mod config;
pub mod minplus;
pub mod model;
pub mod sim;
pub mod synth;

pub use analysis::{analyze_all, AnalysisReport, FlowResult, Verdict};
pub use blocking::BlockingMode;
pub use config::{parse_document, ParsedInput};
pub use model::{Flow, NetworkModel};
