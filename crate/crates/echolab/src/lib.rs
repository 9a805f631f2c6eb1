//! Echolab: a small laboratory for studying *data echoing* — reusing items
//! produced by the early stages of a training-data pipeline so that a fast
//! downstream training stage is not starved by slow upstream I/O and
//! preprocessing.
//!
//! The crate is organised around a pull-based streaming pipeline
//! ([`pipeline`]) whose stages can be composed with an echoing stage
//! ([`echo`]) at several insertion points. On top of that sit:
//!
//! * [`timing`] — an analytic overlap model for a two-stage pipeline plus a
//!   step-by-step wall-time simulator,
//! * [`stats`] — duplication statistics for echoed streams (Monte Carlo on
//!   the real pipeline, and an exact enumeration oracle for tiny configs),
//! * [`trainer`] — small dense models trained with SGD/momentum until a
//!   target metric is reached, with fresh-example accounting,
//! * [`harness`] — quasi-random hyperparameter search and the experiment
//!   protocol (repeated searches, per-search winners, CSV/JSON reports).
//!
//! Everything is deterministic given a master seed: stage RNGs are derived
//! from named streams (see [`seeds`]) and data noise comes from counter-based
//! generators, so two runs with the same seed produce byte-identical output.

pub mod echo;
pub mod harness;
pub mod pipeline;
pub mod record;
pub mod seeds;
pub mod stats;
pub mod timing;
pub mod trainer;

pub use echo::EchoFactor;
pub use pipeline::{EchoInsertion, Pipeline, PipelineConfig};
pub use record::{BatchRecord, Dataset, ExampleRecord, Label};
pub use timing::TimingModel;
