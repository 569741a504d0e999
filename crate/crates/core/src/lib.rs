//! Temporal link prediction with an auto-correlation transformer.
//!
//! The crate covers the full pipeline: an append-only temporal event store
//! with interaction-sequence extraction ([`graph`]), four per-event encodings
//! ([`encode`]), frequency-domain auto-correlation attention with time-delay
//! aggregation ([`acom`]), the stacked model with adaptive readout and link
//! predictor ([`model`]), Adam training and ranked evaluation
//! ([`train`], [`metrics`]), and a synthetic periodic-graph generator for
//! end-to-end validation ([`synth`]). Everything numeric runs on the in-crate
//! reverse-mode tensor engine ([`tensor`]) and real-input FFT ([`fft`]).

pub mod acom;
pub mod encode;
mod error;
pub mod fft;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod params;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
