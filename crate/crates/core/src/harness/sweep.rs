use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::DatasetItem;
use super::report::{execute, RunReport, RunSetup};
use crate::analysis::{pareto_frontier, ParetoPoint, RunMetrics};
use crate::error::{Error, Result};
use crate::predictor::Predictor;
use crate::scalar::Scalar;
use crate::strategies::{DecodePolicy, Metric, Mode, Strategy};

/// Cartesian grid over OSDT's mode, metric, cap and slack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid<F> {
    modes: Vec<Mode>,
    metrics: Vec<Metric>,
    caps: Vec<F>,
    slacks: Vec<F>,
}

#[derive(Deserialize)]
struct GridRepr<F> {
    modes: Vec<Mode>,
    metrics: Vec<Metric>,
    caps: Vec<F>,
    slacks: Vec<F>,
}

impl<'de, F: Scalar> Deserialize<'de> for SweepGrid<F> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let r = GridRepr::<F>::deserialize(deserializer)?;
        SweepGrid::new(r.modes, r.metrics, r.caps, r.slacks).map_err(serde::de::Error::custom)
    }
}

impl<F: Scalar> SweepGrid<F> {
    pub fn new(modes: Vec<Mode>, metrics: Vec<Metric>, caps: Vec<F>, slacks: Vec<F>) -> Result<Self> {
        for (name, empty) in [
            ("modes", modes.is_empty()),
            ("metrics", metrics.is_empty()),
            ("caps", caps.is_empty()),
            ("slacks", slacks.is_empty()),
        ] {
            if empty {
                return Err(Error::InvalidGrid(format!("{name} is empty")));
            }
        }
        if let Some(c) = caps.iter().find(|c| !c.is_unit_confidence()) {
            return Err(Error::InvalidGrid(format!("cap {c} outside (0, 1]")));
        }
        if let Some(e) = slacks.iter().find(|&&e| !(e >= F::zero() && e < F::one())) {
            return Err(Error::InvalidGrid(format!("slack {e} outside [0, 1)")));
        }
        Ok(Self {
            modes,
            metrics,
            caps,
            slacks,
        })
    }

    /// Both modes, all five metrics, caps {0.75..0.95}, slacks {0.01..0.2}.
    pub fn full() -> Self {
        let f = |v: &[f64]| v.iter().map(|&x| F::of(x)).collect::<Vec<F>>();
        Self::new(
            Mode::ALL.to_vec(),
            Metric::ALL.to_vec(),
            f(&[0.75, 0.8, 0.85, 0.9, 0.95]),
            f(&[0.01, 0.05, 0.1, 0.15, 0.2]),
        )
        .expect("static grid is valid")
    }

    pub fn len(&self) -> usize {
        self.modes.len() * self.metrics.len() * self.caps.len() * self.slacks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// OSDT policies in (mode, metric, cap, slack) order, other fields from `base`.
    pub fn policies(&self, base: &DecodePolicy<F>) -> Vec<DecodePolicy<F>> {
        let mut out = Vec::with_capacity(self.len());
        for &mode in &self.modes {
            for &metric in &self.metrics {
                for &cap in &self.caps {
                    for &slack in &self.slacks {
                        out.push(DecodePolicy {
                            strategy: Strategy::Osdt,
                            mode,
                            metric,
                            cap,
                            slack,
                            ..*base
                        });
                    }
                }
            }
        }
        out
    }
}

/// One grid cell: the report, or the error that stopped it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry<F> {
    pub label: String,
    pub policy: DecodePolicy<F>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<RunMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub report: Option<RunReport<F>>,
}

/// Runs one OSDT decode of the whole dataset per grid cell, each calibrating
/// afresh on the first item. Failed cells are recorded, not fatal.
pub fn sweep<F, P>(
    items: &[DatasetItem],
    predictor: &P,
    grid: &SweepGrid<F>,
    base: &DecodePolicy<F>,
    setup: RunSetup<'_>,
) -> Vec<SweepEntry<F>>
where
    F: Scalar,
    P: Predictor<F> + ?Sized,
{
    grid.policies(base)
        .into_par_iter()
        .map(|policy| match execute(items, predictor, &policy, None, setup) {
            Ok(report) => SweepEntry {
                label: policy.label(),
                policy,
                metrics: Some(report.metrics),
                error: None,
                report: Some(report),
            },
            Err(e) => SweepEntry {
                label: policy.label(),
                policy,
                metrics: None,
                error: Some(e.to_string()),
                report: None,
            },
        })
        .collect()
}

/// Throughput axis used for frontiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FrontierAxis {
    #[default]
    TokensPerCall,
    TokensPerSecond,
}

impl FrontierAxis {
    pub fn pick(self, m: &RunMetrics) -> f64 {
        match self {
            FrontierAxis::TokensPerCall => m.tokens_per_call,
            FrontierAxis::TokensPerSecond => m.tokens_per_second,
        }
    }
}

pub fn frontier_of<'a, I>(rows: I, axis: FrontierAxis) -> Vec<ParetoPoint>
where
    I: IntoIterator<Item = (&'a str, &'a RunMetrics)>,
{
    let points: Vec<ParetoPoint> = rows
        .into_iter()
        .map(|(label, m)| ParetoPoint::new(label, m.accuracy, axis.pick(m)))
        .collect();
    pareto_frontier(&points)
}
