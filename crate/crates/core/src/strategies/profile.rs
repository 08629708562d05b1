//! Calibrated threshold profiles and the cap/slack lookup applied at decode time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::policy::{Mode, RecordScope};
use super::stats::{statistic, Metric};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Confidences observed at one (block, step) of a decode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRecord<F> {
    pub block: usize,
    pub step: usize,
    pub values: Vec<F>,
    pub scope: RecordScope,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Thresholds<F> {
    /// `τ_b`, indexed by `block − 1`.
    Block(Vec<F>),
    /// `τ_{b,s}`, indexed by `[block − 1][step]`.
    StepBlock(Vec<Vec<F>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdProfile<F> {
    pub metric: Metric,
    pub thresholds: Thresholds<F>,
}

impl<F: Scalar> ThresholdProfile<F> {
    pub fn mode(&self) -> Mode {
        match self.thresholds {
            Thresholds::Block(_) => Mode::Block,
            Thresholds::StepBlock(_) => Mode::StepBlock,
        }
    }

    pub fn num_blocks(&self) -> usize {
        match &self.thresholds {
            Thresholds::Block(t) => t.len(),
            Thresholds::StepBlock(t) => t.len(),
        }
    }

    /// Profile whose every entry is `tau`, with `steps` steps per block in step-block mode.
    pub fn uniform(mode: Mode, metric: Metric, num_blocks: usize, steps: usize, tau: F) -> Self {
        let thresholds = match mode {
            Mode::Block => Thresholds::Block(vec![tau; num_blocks]),
            Mode::StepBlock => Thresholds::StepBlock(vec![vec![tau; steps.max(1)]; num_blocks]),
        };
        Self { metric, thresholds }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProfile(m));
        if self.num_blocks() == 0 {
            return bad("no blocks".into());
        }
        let check = |b: usize, v: F| {
            if v.is_unit_confidence() {
                Ok(())
            } else {
                Err(Error::InvalidProfile(format!(
                    "threshold {v} for block {b} outside (0, 1]"
                )))
            }
        };
        match &self.thresholds {
            Thresholds::Block(t) => {
                for (i, &v) in t.iter().enumerate() {
                    check(i + 1, v)?;
                }
            }
            Thresholds::StepBlock(t) => {
                for (i, steps) in t.iter().enumerate() {
                    if steps.is_empty() {
                        return bad(format!("block {} has no step thresholds", i + 1));
                    }
                    for &v in steps {
                        check(i + 1, v)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Calibrated `τ` for `(block, step)` before cap and slack. Step indices past
    /// the last calibrated step of a block reuse that last step's threshold.
    pub fn raw(&self, block: usize, step: usize) -> Result<F> {
        let n = self.num_blocks();
        if block == 0 || block > n {
            return Err(Error::BlockOutOfRange { block, num_blocks: n });
        }
        Ok(match &self.thresholds {
            Thresholds::Block(t) => t[block - 1],
            Thresholds::StepBlock(t) => {
                let steps = &t[block - 1];
                steps[step.min(steps.len() - 1)]
            }
        })
    }
}

/// Effective threshold `min(τ, cap)·(1 − slack)` for `(block, step)`.
pub fn lookup_threshold<F: Scalar>(
    profile: &ThresholdProfile<F>,
    block: usize,
    step: usize,
    cap: F,
    slack: F,
) -> Result<F> {
    let tau = profile.raw(block, step)?;
    Ok(tau.min(cap) * (F::one() - slack))
}

/// Builds a profile from one calibration decode's confidence records.
///
/// Block mode pools every value recorded in a block; step-block mode keeps one
/// threshold per recorded step. Every block `1..=num_blocks` needs records.
pub fn calibrate<F: Scalar>(
    records: &[ConfidenceRecord<F>],
    mode: Mode,
    metric: Metric,
    num_blocks: usize,
) -> Result<ThresholdProfile<F>> {
    let mut grouped: BTreeMap<usize, BTreeMap<usize, Vec<F>>> = BTreeMap::new();
    for r in records {
        if r.block == 0 || r.block > num_blocks {
            return Err(Error::BlockOutOfRange {
                block: r.block,
                num_blocks,
            });
        }
        if r.values.is_empty() {
            return Err(Error::EmptyRecords {
                block: r.block,
                step: r.step,
            });
        }
        grouped
            .entry(r.block)
            .or_default()
            .entry(r.step)
            .or_default()
            .extend_from_slice(&r.values);
    }
    let mut per_block = Vec::with_capacity(num_blocks);
    for b in 1..=num_blocks {
        let steps = grouped.remove(&b).ok_or(Error::MissingBlock(b))?;
        per_block.push(steps);
    }
    let thresholds = match mode {
        Mode::Block => Thresholds::Block(
            per_block
                .iter()
                .map(|steps| {
                    let pooled: Vec<F> = steps.values().flatten().copied().collect();
                    statistic(&pooled, metric)
                })
                .collect::<Result<_>>()?,
        ),
        Mode::StepBlock => Thresholds::StepBlock(
            per_block
                .iter()
                .enumerate()
                .map(|(i, steps)| {
                    steps
                        .iter()
                        .enumerate()
                        .map(|(expected, (&s, values))| {
                            if s != expected {
                                return Err(Error::EmptyRecords {
                                    block: i + 1,
                                    step: expected,
                                });
                            }
                            statistic(values, metric)
                        })
                        .collect::<Result<Vec<F>>>()
                })
                .collect::<Result<_>>()?,
        ),
    };
    let profile = ThresholdProfile { metric, thresholds };
    profile.validate()?;
    Ok(profile)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ThresholdsRepr<F> {
    Block(Vec<F>),
    StepBlock(Vec<Vec<F>>),
}

#[derive(Serialize, Deserialize)]
struct ProfileRepr<F> {
    mode: Mode,
    metric: Metric,
    thresholds: ThresholdsRepr<F>,
}

impl<F: Scalar> Serialize for ThresholdProfile<F> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let thresholds = match &self.thresholds {
            Thresholds::Block(t) => ThresholdsRepr::Block(t.clone()),
            Thresholds::StepBlock(t) => ThresholdsRepr::StepBlock(t.clone()),
        };
        ProfileRepr {
            mode: self.mode(),
            metric: self.metric,
            thresholds,
        }
        .serialize(serializer)
    }
}

impl<'de, F: Scalar> Deserialize<'de> for ThresholdProfile<F> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = ProfileRepr::<F>::deserialize(deserializer)?;
        let thresholds = match (repr.mode, repr.thresholds) {
            (Mode::Block, ThresholdsRepr::Block(t)) => Thresholds::Block(t),
            (Mode::StepBlock, ThresholdsRepr::StepBlock(t)) => Thresholds::StepBlock(t),
            (mode, _) => {
                return Err(D::Error::custom(format!("thresholds shape does not match mode {mode}")));
            }
        };
        let profile = ThresholdProfile {
            metric: repr.metric,
            thresholds,
        };
        profile.validate().map_err(D::Error::custom)?;
        Ok(profile)
    }
}
