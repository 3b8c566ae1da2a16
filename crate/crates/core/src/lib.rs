//! Hardware-free event-camera eye tracking.
//!
//! The crate covers the full path from a raw event stream to a deployable
//! integer network:
//!
//! * [`event_io`] reads, writes, validates and synthesizes event streams.
//! * [`framing`] accumulates fixed-window event frames and aligns them to a
//!   per-user region of interest.
//! * [`augmentation`] expands a labeled set eightfold with flips and shifts.
//! * [`network`] holds the CNN definition, float forward/backward, Adam and
//!   the regression and grid-classification heads.
//! * [`quantization`] implements calibration, mixed-precision presets,
//!   quantization-aware training and bit-exact integer inference.
//! * [`deployment`] plans activation memory, maps processors and estimates
//!   latency and energy for accelerator-style targets.
//! * [`evaluation`] computes tracking metrics and reports.
//! * [`pipeline`] chains everything behind a config file; the `eetnet`
//!   binary is a thin wrapper over it.

pub mod augmentation;
pub mod deployment;
pub mod error;
pub mod evaluation;
pub mod event_io;
pub mod framing;
pub mod network;
pub mod pipeline;
pub mod quantization;

pub use error::{Error, ErrorClass, Result};
