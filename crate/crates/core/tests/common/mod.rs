//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mdm_sched::analysis::ParetoPoint;
use mdm_sched::harness::{load_dataset, DatasetItem};
use mdm_sched::predictor::{PredictionFrame, Predictor, PromptContext, Proposal, BYTE_MASK, BYTE_VOCAB};
use mdm_sched::strategies::Metric;
use mdm_sched::{Result, SequenceState, TokenId};
use serde_json::Value;

pub fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn copy_items() -> Vec<DatasetItem> {
    load_dataset(&data_path("copy.jsonl")).expect("shipped copy dataset")
}

/// Quantile by explicit rank arithmetic: for `p = num/4` the position
/// `p·(n−1)` is split into an integer rank and a remainder in quarters.
pub fn quartile_oracle(values: &[f64], num: usize) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let scaled = num * (s.len() - 1);
    let (rank, rem) = (scaled / 4, scaled % 4);
    if rem == 0 {
        s[rank]
    } else {
        s[rank] + (rem as f64 / 4.0) * (s[rank + 1] - s[rank])
    }
}

pub fn statistic_oracle(values: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Metric::Q1 => quartile_oracle(values, 1),
        Metric::Q2 => quartile_oracle(values, 2),
        Metric::Q3 => quartile_oracle(values, 3),
        Metric::MinWhisker => {
            let q1 = quartile_oracle(values, 1);
            let fence = q1 - 1.5 * (quartile_oracle(values, 3) - q1);
            // Brute force: every candidate at or above the fence, take the least.
            let mut lowest = f64::INFINITY;
            for &v in values {
                if v >= fence && v < lowest {
                    lowest = v;
                }
            }
            lowest.min(q1)
        }
    }
}

/// Frontier by the dominance definition: O(n²) filter, coordinate dedup in
/// input order, then throughput-descending order.
pub fn frontier_oracle(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let dominated = |p: &ParetoPoint| {
        points.iter().any(|q| {
            q.accuracy >= p.accuracy
                && q.throughput >= p.throughput
                && (q.accuracy > p.accuracy || q.throughput > p.throughput)
        })
    };
    let mut out: Vec<ParetoPoint> = Vec::new();
    for p in points {
        if !dominated(p)
            && !out
                .iter()
                .any(|q| q.accuracy == p.accuracy && q.throughput == p.throughput)
        {
            out.push(p.clone());
        }
    }
    out.sort_by(|a, b| {
        b.throughput
            .total_cmp(&a.throughput)
            .then(b.accuracy.total_cmp(&a.accuracy))
    });
    out
}

/// Noise-free U-shaped confidence plus scaled jitter, written out directly.
pub fn u_shape_oracle(step: usize, block_len: usize, jitter_unit: f64, jitter_scale: f64) -> f64 {
    let t = step as f64 / (block_len.max(2) - 1) as f64;
    let u = (t - 0.5) / 0.5;
    let c = 0.95 - 0.15 * u * u + jitter_unit * jitter_scale;
    c.clamp(1e-6, 1.0)
}

/// Strict threshold with lowest-index argmax fallback, over `(position, conf)`.
pub fn threshold_oracle(confs: &[(usize, f64)], tau: f64) -> Vec<usize> {
    let passed: Vec<usize> = confs.iter().filter(|&&(_, c)| c > tau).map(|&(p, _)| p).collect();
    if !passed.is_empty() {
        return passed;
    }
    let mut best = confs[0];
    for &(p, c) in &confs[1..] {
        if c > best.1 {
            best = (p, c);
        }
    }
    vec![best.0]
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash-driven confidences in `(0, 1]` and tokens in the byte range, with
/// optional coarse quantization to force ties.
#[derive(Debug, Clone)]
pub struct HashPredictor {
    pub seed: u64,
    pub levels: Option<u32>,
}

impl Predictor<f64> for HashPredictor {
    fn vocab_size(&self) -> usize {
        BYTE_VOCAB
    }

    fn mask_id(&self) -> TokenId {
        BYTE_MASK
    }

    fn predict(
        &self,
        _ctx: &PromptContext<'_>,
        state: &SequenceState,
        block: usize,
        step: usize,
    ) -> Result<PredictionFrame<f64>> {
        let mut frame = PredictionFrame::new(block, step);
        for pos in state.masked_in_block(block)? {
            let h = mix(self.seed ^ mix((block as u64) << 40 ^ (step as u64) << 20 ^ pos as u64));
            let unit = ((h >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
            let conf = match self.levels {
                Some(l) => (unit * l as f64).ceil() / l as f64,
                None => unit,
            };
            frame.entries.insert(
                pos,
                Proposal {
                    token: TokenId((h % 256) as u32),
                    conf,
                },
            );
        }
        Ok(frame)
    }
}

/// Removes wall-clock derived fields anywhere in a JSON value.
pub fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("wall_time");
            map.remove("tokens_per_second");
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// File contents with timing fields removed: JSON and JSONL are parsed and
/// stripped, CSV loses its `tokens_per_second` column.
pub fn normalized(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let json_line = |line: &str| {
        let mut v: Value = serde_json::from_str(line).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        strip_timing(&mut v);
        v.to_string()
    };
    match ext {
        "json" => json_line(&text),
        "jsonl" => text.lines().map(json_line).collect::<Vec<_>>().join("\n"),
        "csv" => {
            let header = text.lines().next().unwrap_or("");
            let skip = header.split(',').position(|h| h == "tokens_per_second");
            text.lines()
                .map(|l| {
                    l.split(',')
                        .enumerate()
                        .filter(|(i, _)| Some(*i) != skip)
                        .map(|(_, c)| c)
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect::<Vec<_>>()
                .join("\n")
        }
        _ => text,
    }
}
