//! Confidence-trajectory analytics, throughput metrics and Pareto frontiers.

mod export;
mod metrics;
mod pareto;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use export::{read_trajectories, write_metrics_csv, write_similarity_csv, write_trajectories};
pub use metrics::{run_metrics, RunMetrics};
pub use pareto::{dominates, pareto_frontier, ParetoPoint};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::strategies::ConfidenceRecord;

/// Mean confidence per (block, step), flattened in (block, step) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryVector<F> {
    #[serde(rename = "prompt")]
    pub prompt_id: String,
    pub values: Vec<F>,
}

/// Expected (blocks × steps-per-block) grid of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepGrid {
    pub num_blocks: usize,
    pub steps_per_block: usize,
}

/// Builds the step-block mean vector of one decode.
///
/// Blocks must run `1..=T` and each block's steps `0..S_b` without gaps. With
/// a `grid`, every block must have exactly `steps_per_block` steps.
pub fn stepblock_mean_vector<F: Scalar>(
    prompt_id: &str,
    records: &[ConfidenceRecord<F>],
    grid: Option<StepGrid>,
) -> Result<TrajectoryVector<F>> {
    let mut cells: BTreeMap<(usize, usize), Vec<F>> = BTreeMap::new();
    for r in records {
        cells.entry((r.block, r.step)).or_default().extend_from_slice(&r.values);
    }
    if cells.is_empty() {
        return Err(Error::EmptyRecords { block: 1, step: 0 });
    }
    let num_blocks = match grid {
        Some(g) => g.num_blocks,
        None => cells.keys().map(|&(b, _)| b).max().unwrap_or(0),
    };
    let mut values = Vec::with_capacity(cells.len());
    for b in 1..=num_blocks {
        let steps = match grid {
            Some(g) => g.steps_per_block,
            None => cells.range((b, 0)..(b + 1, 0)).count(),
        };
        if steps == 0 {
            return Err(Error::EmptyRecords { block: b, step: 0 });
        }
        for s in 0..steps {
            let cell = cells.remove(&(b, s)).unwrap_or_default();
            if cell.is_empty() {
                return Err(Error::EmptyRecords { block: b, step: s });
            }
            let sum = cell.iter().fold(F::zero(), |acc, &v| acc + v);
            values.push(sum / F::of(cell.len() as f64));
        }
    }
    if let Some(&(block, step)) = cells.keys().next() {
        // Records outside the grid (or past a gap) were never consumed.
        return Err(Error::EmptyRecords { block, step });
    }
    Ok(TrajectoryVector {
        prompt_id: prompt_id.to_string(),
        values,
    })
}

/// `dot(u, v) / (‖u‖·‖v‖)`.
pub fn cosine_similarity<F: Scalar>(u: &[F], v: &[F]) -> Result<F> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let dot = u.iter().zip(v).fold(F::zero(), |acc, (&a, &b)| acc + a * b);
    let nu = u.iter().fold(F::zero(), |acc, &a| acc + a * a).sqrt();
    let nv = v.iter().fold(F::zero(), |acc, &b| acc + b * b).sqrt();
    if nu == F::zero() || nv == F::zero() {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (nu * nv)).max(-F::one()).min(F::one()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix<F> {
    pub prompt_ids: Vec<String>,
    pub values: Vec<Vec<F>>,
}

impl<F: Scalar> SimilarityMatrix<F> {
    pub fn len(&self) -> usize {
        self.prompt_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompt_ids.is_empty()
    }

    pub fn min_off_diagonal(&self) -> Option<F> {
        let n = self.len();
        (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.values[i][j])
            .fold(None, |acc: Option<F>, v| Some(acc.map_or(v, |a| a.min(v))))
    }
}

/// Pairwise cosine matrix; the diagonal is set to exactly 1.
pub fn pairwise_similarity<F: Scalar>(vectors: &[TrajectoryVector<F>]) -> Result<SimilarityMatrix<F>> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::Arity { needed: 2, got: n });
    }
    let mut values = vec![vec![F::one(); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = cosine_similarity(&vectors[i].values, &vectors[j].values)?;
            values[i][j] = c;
            values[j][i] = c;
        }
    }
    // Zero vectors are caught above for off-diagonal pairs only.
    for v in vectors {
        cosine_similarity(&v.values, &v.values)?;
    }
    Ok(SimilarityMatrix {
        prompt_ids: vectors.iter().map(|v| v.prompt_id.clone()).collect(),
        values,
    })
}
