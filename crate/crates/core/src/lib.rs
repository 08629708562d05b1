//! Decoding-policy engine for masked diffusion language models.
//!
//! Generation runs block by block; within a block a [`predictor::Predictor`]
//! proposes a token and a confidence for every masked position, and a strategy
//! decides which positions to commit:
//!
//! * fixed-quota top-k,
//! * a static global confidence threshold,
//! * one-shot dynamic thresholding (OSDT), which decodes the first prompt
//!   statically, summarizes its confidences per block (or per block and step)
//!   into a [`strategies::ThresholdProfile`], and decodes every later prompt
//!   against `min(τ, cap)·(1 − slack)`.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod analysis;
pub mod error;
pub mod harness;
pub mod predictor;
pub mod scalar;
pub mod seqstate;
pub mod strategies;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use seqstate::{BlockLayout, GenLayout, SequenceState, TokenId, UnmaskSelection};

pub type PredictionFrame = predictor::PredictionFrame<f64>;
pub type ScriptedSchedule = predictor::ScriptedSchedule<f64>;
pub type DecodePolicy = strategies::DecodePolicy<f64>;
pub type ThresholdProfile = strategies::ThresholdProfile<f64>;
pub type ConfidenceRecord = strategies::ConfidenceRecord<f64>;
pub type DecodeTrace = strategies::DecodeTrace<f64>;
pub type DecodeOutput = strategies::DecodeOutput<f64>;
pub type TrajectoryVector = analysis::TrajectoryVector<f64>;
pub type SimilarityMatrix = analysis::SimilarityMatrix<f64>;
pub type RunReport = harness::RunReport<f64>;
pub type SweepGrid = harness::SweepGrid<f64>;
