//! Benchmark metrics (minADE / minFDE / miss rate and probabilistic
//! variants) and the spline-based curvature feasibility audit.

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::scene::Point;
use crate::selection::PredictionSet;

/// Per-scenario (or aggregated) metric values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub min_ade: f64,
    pub min_fde: f64,
    /// 0/1 per scenario; a ratio after aggregation.
    pub miss_rate: f64,
    pub p_min_ade: f64,
    pub p_min_fde: f64,
    /// Fraction of selected trajectories failing the curvature audit.
    pub infeasibility: f64,
}

/// Computes the benchmark metrics against ground truth. "Best" is the
/// trajectory with minimum endpoint error, for both minFDE and minADE;
/// probabilistic variants add -ln(p) of that trajectory.
pub fn compute_metrics(pred: &PredictionSet, gt: &[Point], cfg: &Config) -> Result<MetricsReport> {
    assert!(!pred.is_empty());
    let gt_end = *gt.last().ok_or_else(|| Error::invalid("ground_truth", "empty"))?;
    let mut best = 0usize;
    let mut best_fde = f64::INFINITY;
    for (i, t) in pred.trajectories.iter().enumerate() {
        if t.steps.len() != gt.len() {
            return Err(Error::LengthMismatch {
                expected: gt.len(),
                got: t.steps.len(),
            });
        }
        let fde = t.endpoint().dist(gt_end);
        if fde < best_fde {
            best_fde = fde;
            best = i;
        }
    }
    let best_traj = &pred.trajectories[best];
    let min_ade = best_traj
        .steps
        .iter()
        .zip(gt)
        .map(|(s, g)| s.position().dist(*g))
        .sum::<f64>()
        / gt.len() as f64;
    let p_best = pred.probabilities[best];
    let neg_log_p = -p_best.max(1e-12).ln();
    Ok(MetricsReport {
        min_ade,
        min_fde: best_fde,
        miss_rate: if best_fde > cfg.miss_threshold { 1.0 } else { 0.0 },
        p_min_ade: min_ade + neg_log_p,
        p_min_fde: best_fde + neg_log_p,
        infeasibility: 0.0,
    })
}

/// Natural cubic spline over uniform knots: returns the second
/// derivatives at each knot (Thomas algorithm on the tridiagonal system).
fn natural_spline_second_derivs(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // interior equations: m[i-1] + 4 m[i] + m[i+1] = 6 (y[i-1] - 2 y[i] + y[i+1])
    let k = n - 2;
    let mut diag = vec![4.0; k];
    let mut rhs: Vec<f64> = (1..n - 1)
        .map(|i| 6.0 * (y[i - 1] - 2.0 * y[i] + y[i + 1]))
        .collect();
    for i in 1..k {
        let f = 1.0 / diag[i - 1];
        diag[i] -= f;
        rhs[i] -= f * rhs[i - 1];
    }
    let mut sol = vec![0.0; k];
    sol[k - 1] = rhs[k - 1] / diag[k - 1];
    for i in (0..k - 1).rev() {
        sol[i] = (rhs[i] - sol[i + 1]) / diag[i];
    }
    m[1..n - 1].copy_from_slice(&sol);
    m
}

/// First derivative at each knot of the natural spline (unit spacing).
fn spline_first_derivs(y: &[f64], m: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut d = vec![0.0; n];
    for i in 0..n {
        if i + 1 < n {
            // derivative at the left end of interval [i, i+1]
            d[i] = (y[i + 1] - y[i]) - (2.0 * m[i] + m[i + 1]) / 6.0;
        } else {
            // right end of the last interval
            d[i] = (y[i] - y[i - 1]) + (2.0 * m[i] + m[i - 1]) / 6.0;
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible,
}

/// Curvature audit of a discrete position sequence: fit natural cubic
/// splines per coordinate against the time index, evaluate
/// kappa = |x'y'' - y'x''| / (x'^2 + y'^2)^(3/2) at each knot, infeasible
/// iff any kappa exceeds `kappa_audit`. Stationary repeated points make
/// curvature undefined; such sequences short-circuit to feasible.
pub fn audit_curvature(positions: &[Point], kappa_audit: f64) -> Result<Feasibility> {
    if positions.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "need at least 3 points, got {}",
            positions.len()
        )));
    }
    let xs: Vec<f64> = positions.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = positions.iter().map(|p| p.y).collect();
    let mx = natural_spline_second_derivs(&xs);
    let my = natural_spline_second_derivs(&ys);
    let dx = spline_first_derivs(&xs, &mx);
    let dy = spline_first_derivs(&ys, &my);
    for i in 0..positions.len() {
        let speed2 = dx[i] * dx[i] + dy[i] * dy[i];
        if speed2 < 1e-12 {
            // at rest; curvature undefined, treated feasible
            continue;
        }
        let kappa = (dx[i] * my[i] - dy[i] * mx[i]).abs() / speed2.powf(1.5);
        if kappa > kappa_audit {
            return Ok(Feasibility::Infeasible);
        }
    }
    Ok(Feasibility::Feasible)
}
