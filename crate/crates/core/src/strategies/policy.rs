use std::fmt;

use serde::{Deserialize, Serialize};

use super::stats::Metric;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Top-k by confidence, k positions per step.
    Fixed,
    /// One global confidence threshold.
    Static,
    /// One-shot calibrated dynamic thresholds.
    Osdt,
}

/// Threshold granularity: one per block, or one per (block, step).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Block,
    StepBlock,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Block, Mode::StepBlock];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Block => "block",
            Mode::StepBlock => "step-block",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which confidences of a step are kept as calibration evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RecordScope {
    /// Confidences of the positions actually committed.
    #[default]
    AcceptedTokens,
    /// Confidences of every masked position in the frame.
    AllMasked,
}

/// Full decoding policy. Fields irrelevant to `strategy` are carried but unused.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "F: Scalar"))]
pub struct DecodePolicy<F> {
    pub strategy: Strategy,
    pub mode: Mode,
    pub metric: Metric,
    pub cap: F,
    pub slack: F,
    pub tau_static: F,
    pub quota: usize,
    pub calibration_tau: F,
    pub record_scope: RecordScope,
}

impl<F: Scalar> Default for DecodePolicy<F> {
    fn default() -> Self {
        Self {
            strategy: Strategy::Osdt,
            mode: Mode::Block,
            metric: Metric::Q1,
            cap: F::of(0.8),
            slack: F::of(0.1),
            tau_static: F::of(0.9),
            quota: 1,
            calibration_tau: F::of(0.9),
            record_scope: RecordScope::AcceptedTokens,
        }
    }
}

/// Tuned OSDT settings per benchmark family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Gpqa,
    Gsm8k,
    Humaneval,
}

impl<F: Scalar> DecodePolicy<F> {
    pub fn fixed(quota: usize) -> Self {
        Self {
            strategy: Strategy::Fixed,
            quota,
            ..Self::default()
        }
    }

    pub fn static_threshold(tau: F) -> Self {
        Self {
            strategy: Strategy::Static,
            tau_static: tau,
            ..Self::default()
        }
    }

    pub fn osdt(mode: Mode, metric: Metric, cap: F, slack: F) -> Self {
        Self {
            strategy: Strategy::Osdt,
            mode,
            metric,
            cap,
            slack,
            ..Self::default()
        }
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Gpqa => Self::osdt(Mode::StepBlock, Metric::Q2, F::of(0.75), F::of(0.20)),
            Preset::Gsm8k => Self::osdt(Mode::Block, Metric::Q1, F::of(0.75), F::of(0.20)),
            Preset::Humaneval => Self::osdt(Mode::Block, Metric::Q1, F::of(0.80), F::of(0.10)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: F| {
            if v.is_unit_confidence() {
                Ok(())
            } else {
                Err(Error::InvalidPolicy(format!("{name} = {v} outside (0, 1]")))
            }
        };
        unit("cap", self.cap)?;
        unit("tau_static", self.tau_static)?;
        unit("calibration_tau", self.calibration_tau)?;
        if !(self.slack >= F::zero() && self.slack < F::one()) {
            return Err(Error::InvalidPolicy(format!("slack = {} outside [0, 1)", self.slack)));
        }
        if self.quota == 0 {
            return Err(Error::InvalidPolicy("quota must be at least 1".into()));
        }
        Ok(())
    }

    /// Short human-readable identifier naming only the fields the strategy uses.
    pub fn label(&self) -> String {
        match self.strategy {
            Strategy::Fixed => format!("fixed/k={}", self.quota),
            Strategy::Static => format!("static/tau={}", self.tau_static),
            Strategy::Osdt => format!(
                "osdt/{}/{}/cap={}/slack={}",
                self.mode, self.metric, self.cap, self.slack
            ),
        }
    }
}
