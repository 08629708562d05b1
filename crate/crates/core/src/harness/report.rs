use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{decode_bytes, exact_match, DatasetItem};
use super::PredictorSpec;
use crate::analysis::{run_metrics, write_metrics_csv, RunMetrics};
use crate::error::{Error, Result};
use crate::predictor::Predictor;
use crate::scalar::Scalar;
use crate::seqstate::{GenLayout, TokenId};
use crate::strategies::{run_policy, DecodePolicy, DecodeTrace, ThresholdProfile};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub id: String,
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub correct: bool,
}

/// One trace-file line: the trace plus the final sequence state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar"))]
pub struct TraceLine<F> {
    #[serde(flatten)]
    pub trace: DecodeTrace<F>,
    pub state: serde_json::Value,
}

/// Everything one policy run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
pub struct RunReport<F> {
    pub label: String,
    pub policy: DecodePolicy<F>,
    pub layout: GenLayout,
    pub predictor: PredictorSpec,
    pub seed: u64,
    pub version: String,
    pub metrics: RunMetrics,
    pub profile: Option<ThresholdProfile<F>>,
    #[serde(skip)]
    pub answers: Vec<Answer>,
    #[serde(skip)]
    pub traces: Vec<TraceLine<F>>,
}

/// Identifies the configuration a report was produced under.
#[derive(Debug, Clone, Copy)]
pub struct RunSetup<'a> {
    pub layout: GenLayout,
    pub predictor: &'a PredictorSpec,
    pub seed: u64,
}

/// Decodes `items` under `policy` and scores the answers.
pub fn execute<F, P>(
    items: &[DatasetItem],
    predictor: &P,
    policy: &DecodePolicy<F>,
    profile: Option<&ThresholdProfile<F>>,
    setup: RunSetup<'_>,
) -> Result<RunReport<F>>
where
    F: Scalar,
    P: Predictor<F> + ?Sized,
{
    let contexts: Vec<_> = items.iter().map(DatasetItem::context).collect();
    let run = run_policy(&contexts, predictor, setup.layout, policy, profile)?;
    let answers: Vec<Answer> = run
        .outputs
        .iter()
        .zip(items)
        .map(|(out, item)| Answer {
            id: item.id.clone(),
            tokens: out.answer().to_vec(),
            text: decode_bytes(out.answer()),
            correct: exact_match(out.answer(), &item.reference),
        })
        .collect();
    let correct: Vec<bool> = answers.iter().map(|a| a.correct).collect();
    let traces: Vec<DecodeTrace<F>> = run.outputs.iter().map(|o| o.trace.clone()).collect();
    let metrics = run_metrics(&traces, &correct)?;
    let trace_lines = run
        .outputs
        .into_iter()
        .map(|o| TraceLine {
            state: serde_json::to_value(&o.state).expect("state serializes"),
            trace: o.trace,
        })
        .collect();
    Ok(RunReport {
        label: policy.label(),
        policy: *policy,
        layout: setup.layout,
        predictor: setup.predictor.clone(),
        seed: setup.seed,
        version: TOOL_VERSION.to_string(),
        metrics,
        profile: run.profile,
        answers,
        traces: trace_lines,
    })
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(json_err)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        serde_json::to_writer(&mut w, v).map_err(json_err)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.json`, `answers.jsonl`, `traces.jsonl`, `metrics.csv` and,
/// for OSDT runs, `profile.json` into `dir`.
pub fn write_run<F: Scalar>(dir: &Path, report: &RunReport<F>) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), report)?;
    write_jsonl(&dir.join("answers.jsonl"), &report.answers)?;
    write_jsonl(&dir.join("traces.jsonl"), &report.traces)?;
    write_metrics_csv(
        File::create(dir.join("metrics.csv"))?,
        &[(report.label.clone(), report.metrics)],
    )?;
    if let Some(profile) = &report.profile {
        write_json(&dir.join("profile.json"), profile)?;
    }
    Ok(())
}

pub fn read_traces<F: Scalar>(path: &Path) -> Result<Vec<TraceLine<F>>> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_profile<F: Scalar>(path: &Path) -> Result<ThresholdProfile<F>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidProfile(e.to_string()))
}
