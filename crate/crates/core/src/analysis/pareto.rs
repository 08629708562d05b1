use serde::{Deserialize, Serialize};

/// One configuration's position in accuracy × throughput space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub label: String,
    pub accuracy: f64,
    pub throughput: f64,
}

impl ParetoPoint {
    pub fn new(label: impl Into<String>, accuracy: f64, throughput: f64) -> Self {
        Self {
            label: label.into(),
            accuracy,
            throughput,
        }
    }
}

/// `a` is at least as good on both axes and strictly better on one.
pub fn dominates(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    a.accuracy >= b.accuracy && a.throughput >= b.throughput && (a.accuracy > b.accuracy || a.throughput > b.throughput)
}

/// Non-dominated points, sorted by throughput descending (accuracy descending
/// on ties). Points with identical coordinates are kept once, first label wins.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut order: Vec<&ParetoPoint> = points.iter().collect();
    // Stable sort keeps input order among identical points.
    order.sort_by(|a, b| {
        b.throughput
            .total_cmp(&a.throughput)
            .then(b.accuracy.total_cmp(&a.accuracy))
    });
    let mut frontier: Vec<ParetoPoint> = Vec::new();
    let mut best_accuracy = f64::NEG_INFINITY;
    for p in order {
        if let Some(last) = frontier.last() {
            if last.accuracy == p.accuracy && last.throughput == p.throughput {
                continue;
            }
        }
        // Everything seen so far has throughput >= p's, so p survives only by
        // beating every earlier accuracy.
        if p.accuracy > best_accuracy {
            best_accuracy = p.accuracy;
            frontier.push(p.clone());
        }
    }
    frontier
}
