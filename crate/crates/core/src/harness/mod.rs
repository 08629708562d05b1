//! Evaluation harness: datasets, predictor construction, runs, sweeps and comparisons.

mod dataset;
mod report;
mod sweep;
pub mod toy;

use serde::{Deserialize, Serialize};

pub use dataset::{
    check_items, decode_bytes, encode_bytes, evaluate_exact_match, exact_match, load_dataset, parse_dataset,
    DatasetItem,
};
pub use report::{
    execute, read_profile, read_traces, write_json, write_jsonl, write_run, Answer, RunReport, RunSetup, TraceLine,
    TOOL_VERSION,
};
pub use sweep::{frontier_of, sweep, FrontierAxis, SweepEntry, SweepGrid};

use crate::analysis::{ParetoPoint, RunMetrics};
use crate::error::{Error, Result};
use crate::predictor::{BigramPredictor, ExternPredictor, Predictor, ScriptedPredictor, ScriptedSchedule};
use crate::scalar::Scalar;
use crate::strategies::{DecodePolicy, Preset};

/// Environment variable consulted when no `--seed` is given.
pub const SEED_ENV: &str = "MDM_SCHED_SEED";
/// Jitter amplitude of the `noisy` predictor.
pub const NOISY_JITTER: f64 = 0.02;
/// Smoothing constant of the `bigram` predictor.
pub const BIGRAM_ALPHA: f64 = 0.1;

/// `explicit`, else `$MDM_SCHED_SEED`, else 0.
pub fn resolve_seed(explicit: Option<u64>) -> Result<u64> {
    if let Some(seed) = explicit {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidPolicy(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    /// U-shaped schedule without jitter, proposing the reference.
    Scripted,
    /// U-shaped schedule with per-position jitter.
    Noisy,
    /// Bigram model fitted on the dataset's prompts and references.
    Bigram,
    /// External process speaking the line protocol.
    Extern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extern_cmd: Option<String>,
}

impl PredictorSpec {
    pub fn new(kind: PredictorKind) -> Self {
        Self { kind, extern_cmd: None }
    }
}

pub fn build_predictor<F: Scalar>(
    spec: &PredictorSpec,
    items: &[DatasetItem],
    seed: u64,
) -> Result<Box<dyn Predictor<F>>> {
    Ok(match spec.kind {
        PredictorKind::Scripted => Box::new(ScriptedPredictor::new(ScriptedSchedule::default().with_seed(seed))?),
        PredictorKind::Noisy => Box::new(ScriptedPredictor::new(
            ScriptedSchedule::default()
                .with_seed(seed)
                .with_jitter(F::of(NOISY_JITTER)),
        )?),
        PredictorKind::Bigram => {
            let corpus: Vec<_> = items
                .iter()
                .map(|it| it.prompt.iter().chain(&it.reference).copied().collect())
                .collect();
            Box::new(BigramPredictor::from_byte_corpus(&corpus, BIGRAM_ALPHA)?)
        }
        PredictorKind::Extern => {
            let cmd = spec.extern_cmd.as_deref().ok_or_else(|| {
                Error::PredictorUnavailable("--extern-cmd is required for the extern predictor".into())
            })?;
            Box::new(ExternPredictor::spawn(cmd)?)
        }
    })
}

/// Entry of a `compare` policies file: a preset, or explicit policy fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar"))]
pub struct PolicySpec<F> {
    #[serde(default)]
    pub label: Option<String>,
    /// When set, the preset is used and the remaining fields are ignored.
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(flatten)]
    pub policy: DecodePolicy<F>,
}

impl<F: Scalar> PolicySpec<F> {
    pub fn resolve(&self) -> (String, DecodePolicy<F>) {
        let policy = self.preset.map(DecodePolicy::preset).unwrap_or(self.policy);
        let label = self.label.clone().unwrap_or_else(|| policy.label());
        (label, policy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub label: String,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub axis: FrontierAxis,
    pub rows: Vec<CompareRow>,
    pub frontier: Vec<ParetoPoint>,
}

/// Runs every policy on the dataset and extracts the accuracy/throughput frontier.
pub fn compare<F, P>(
    items: &[DatasetItem],
    predictor: &P,
    policies: &[(String, DecodePolicy<F>)],
    axis: FrontierAxis,
    setup: RunSetup<'_>,
) -> Result<(CompareReport, Vec<RunReport<F>>)>
where
    F: Scalar,
    P: Predictor<F> + ?Sized,
{
    if policies.is_empty() {
        return Err(Error::Arity { needed: 1, got: 0 });
    }
    let mut reports = Vec::with_capacity(policies.len());
    for (label, policy) in policies {
        let mut report = execute(items, predictor, policy, None, setup)?;
        report.label = label.clone();
        reports.push(report);
    }
    let rows: Vec<CompareRow> = reports
        .iter()
        .map(|r| CompareRow {
            label: r.label.clone(),
            metrics: r.metrics,
        })
        .collect();
    let frontier = frontier_of(rows.iter().map(|r| (r.label.as_str(), &r.metrics)), axis);
    Ok((CompareReport { axis, rows, frontier }, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::{Metric, Mode, Strategy};

    #[test]
    fn policy_spec_preset_wins() {
        let spec: PolicySpec<f64> = serde_json::from_str(r#"{"preset":"gpqa","cap":0.9}"#).unwrap();
        let (label, p) = spec.resolve();
        assert_eq!((p.mode, p.metric, p.cap), (Mode::StepBlock, Metric::Q2, 0.75));
        assert_eq!(label, p.label());
        let spec: PolicySpec<f64> = serde_json::from_str(r#"{"label":"base","strategy":"static"}"#).unwrap();
        let (label, p) = spec.resolve();
        assert_eq!(
            (label.as_str(), p.strategy, p.tau_static),
            ("base", Strategy::Static, 0.9)
        );
    }

    #[test]
    fn extern_requires_command() {
        let err = build_predictor::<f64>(&PredictorSpec::new(PredictorKind::Extern), &[], 0);
        assert!(matches!(err, Err(Error::PredictorUnavailable(_))));
    }
}
