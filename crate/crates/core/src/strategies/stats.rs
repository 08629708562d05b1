use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Statistic used to turn calibration confidences into a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Mean,
    Q1,
    Q2,
    Q3,
    MinWhisker,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Mean, Metric::Q1, Metric::Q2, Metric::Q3, Metric::MinWhisker];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mean => "mean",
            Metric::Q1 => "q1",
            Metric::Q2 => "q2",
            Metric::Q3 => "q3",
            Metric::MinWhisker => "min-whisker",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidPolicy(format!("unknown metric {s:?}")))
    }
}

fn sorted<F: Scalar>(values: &[F]) -> Vec<F> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}

/// Linear interpolation between closest ranks at position `p·(n−1)` of sorted data.
fn quantile_sorted<F: Scalar>(sorted: &[F], p: F) -> F {
    let h = p * F::of((sorted.len() - 1) as f64);
    let lo = h.floor();
    let i = lo.to_usize().unwrap_or(0);
    let j = h.ceil().to_usize().unwrap_or(i).min(sorted.len() - 1);
    sorted[i] + (h - lo) * (sorted[j] - sorted[i])
}

/// Quantile of unsorted data with closest-rank linear interpolation.
pub fn quantile<F: Scalar>(values: &[F], p: F) -> Result<F> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(quantile_sorted(&sorted(values), p))
}

/// Summary statistic of a non-empty sample.
///
/// The lower whisker is the smallest observation at or above `q1 − 1.5·IQR`,
/// capped at `q1` when interpolation puts `q1` below every such observation.
pub fn statistic<F: Scalar>(values: &[F], metric: Metric) -> Result<F> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let s = sorted(values);
    let (min, max) = (s[0], s[s.len() - 1]);
    let q = |p: f64| quantile_sorted(&s, F::of(p));
    Ok(match metric {
        Metric::Mean => {
            let sum = values.iter().fold(F::zero(), |acc, &v| acc + v);
            // Rounding can push the quotient just past the sample range.
            (sum / F::of(values.len() as f64)).max(min).min(max)
        }
        Metric::Q1 => q(0.25),
        Metric::Q2 => q(0.5),
        Metric::Q3 => q(0.75),
        Metric::MinWhisker => {
            let (q1, q3) = (q(0.25), q(0.75));
            let fence = q1 - F::of(1.5) * (q3 - q1);
            let lowest = s.iter().copied().find(|&v| v >= fence).unwrap_or(q1);
            lowest.min(q1)
        }
    })
}
