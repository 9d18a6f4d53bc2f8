//! Greedy score-ordered trajectory selection with near-duplicate
//! suppression and probability derivation.

use crate::scene::Trajectory;

/// K selected trajectories sorted by descending score with normalized
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub trajectories: Vec<Trajectory>,
    pub probabilities: Vec<f64>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Endpoint Euclidean distance, the suppression metric.
pub fn nms_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    a.endpoint().dist(b.endpoint())
}

/// Accumulated squared distance over all steps; the alternative
/// suppression metric.
pub fn accumulated_dist(a: &Trajectory, b: &Trajectory) -> f64 {
    a.steps
        .iter()
        .zip(&b.steps)
        .map(|(x, y)| {
            let dx = x.x - y.x;
            let dy = x.y - y.y;
            dx * dx + dy * dy
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmsMetric {
    #[default]
    Endpoint,
    Accumulated,
}

/// Greedy NMS selection: iterate trajectories in descending score, keep
/// one iff its distance to every kept trajectory is at least `threshold`,
/// stop at `k` or exhaustion. Probabilities are the kept scores
/// renormalized. Score ties break on the lower index for determinism.
pub fn nms_select(
    trajectories: &[Trajectory],
    scores: &[f64],
    k: usize,
    threshold: f64,
    metric: NmsMetric,
) -> PredictionSet {
    assert_eq!(trajectories.len(), scores.len());
    assert!(!trajectories.is_empty() && k >= 1);
    let mut order: Vec<usize> = (0..trajectories.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let dist = |a: &Trajectory, b: &Trajectory| match metric {
        NmsMetric::Endpoint => nms_distance(a, b),
        NmsMetric::Accumulated => accumulated_dist(a, b),
    };
    let mut kept: Vec<usize> = Vec::new();
    for idx in order {
        if kept.len() == k {
            break;
        }
        if kept
            .iter()
            .all(|&j| dist(&trajectories[idx], &trajectories[j]) >= threshold)
        {
            kept.push(idx);
        }
    }
    let total: f64 = kept.iter().map(|&i| scores[i]).sum();
    PredictionSet {
        trajectories: kept.iter().map(|&i| trajectories[i].clone()).collect(),
        probabilities: kept.iter().map(|&i| scores[i] / total).collect(),
    }
}
