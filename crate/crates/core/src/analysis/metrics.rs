use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::strategies::DecodeTrace;

/// Aggregate accuracy and throughput of a set of decodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub accuracy: f64,
    /// Generated tokens per second of decode-loop wall time; 0 when no time elapsed.
    pub tokens_per_second: f64,
    /// Generated tokens per predictor call, the hardware-independent throughput proxy.
    pub tokens_per_call: f64,
    /// Equal to `tokens_per_call`: every step makes exactly one predictor call.
    pub mean_tokens_per_step: f64,
    pub predictor_calls: usize,
    pub generated_tokens: usize,
    pub wall_time: f64,
}

/// Metrics over `traces`, with `correct[i]` the exact-match verdict for trace `i`.
pub fn run_metrics<F: Scalar>(traces: &[DecodeTrace<F>], correct: &[bool]) -> Result<RunMetrics> {
    if traces.is_empty() {
        return Err(Error::Arity { needed: 1, got: 0 });
    }
    if traces.len() != correct.len() {
        return Err(Error::ArityMismatch {
            answers: correct.len(),
            items: traces.len(),
        });
    }
    for t in traces {
        let committed = t.committed();
        if committed != t.gen_len || t.generated_tokens != t.gen_len {
            return Err(Error::IncompleteTrace {
                committed,
                gen_len: t.gen_len,
            });
        }
    }
    let generated_tokens: usize = traces.iter().map(|t| t.gen_len).sum();
    let predictor_calls: usize = traces.iter().map(|t| t.predictor_calls).sum();
    let wall_time: f64 = traces.iter().map(|t| t.wall_time).sum();
    let tokens_per_call = generated_tokens as f64 / predictor_calls as f64;
    Ok(RunMetrics {
        accuracy: correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64,
        tokens_per_second: if wall_time > 0.0 {
            generated_tokens as f64 / wall_time
        } else {
            0.0
        },
        tokens_per_call,
        mean_tokens_per_step: tokens_per_call,
        predictor_calls,
        generated_tokens,
        wall_time,
    })
}
