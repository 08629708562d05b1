//! Plot-input files: similarity CSV, trajectory JSONL and metrics CSV.

use std::io::{BufRead, Write};

use super::{RunMetrics, SimilarityMatrix, TrajectoryVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Header row of prompt ids followed by one row of cosines per prompt.
pub fn write_similarity_csv<F: Scalar, W: Write>(out: W, matrix: &SimilarityMatrix<F>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&matrix.prompt_ids).map_err(csv_err)?;
    for row in &matrix.values {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One `{"prompt":id,"values":[..]}` object per line.
pub fn write_trajectories<F: Scalar, W: Write>(mut out: W, vectors: &[TrajectoryVector<F>]) -> Result<()> {
    for v in vectors {
        serde_json::to_writer(&mut out, v).map_err(|e| Error::Io(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectories<F: Scalar, R: BufRead>(input: R) -> Result<Vec<TrajectoryVector<F>>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
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

/// Columns: label, accuracy, tokens_per_second, tokens_per_call, predictor_calls.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[(String, RunMetrics)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "label",
        "accuracy",
        "tokens_per_second",
        "tokens_per_call",
        "predictor_calls",
    ])
    .map_err(csv_err)?;
    for (label, m) in rows {
        w.write_record([
            label.clone(),
            m.accuracy.to_string(),
            m.tokens_per_second.to_string(),
            m.tokens_per_call.to_string(),
            m.predictor_calls.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
