//! End-to-end pipeline: state estimation, path search, trajectory
//! generation, scoring, selection — per scenario and aggregated over a
//! dataset with the imperfect-tracking drop/pad protocol.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::estimation::{drop_track, estimate_state, pad_track, KalmanConfig};
use crate::evaluator::{
    future_representation, make_labels, path_representation, score, track_representation,
    EvalInputs, ModelParams, TrainExample,
};
use crate::frenet::{build_frame, project, FrenetFrame, FrenetState};
use crate::generator::{generate, FeasibleSet};
use crate::metrics::{audit_curvature, compute_metrics, Feasibility, MetricsReport};
use crate::path_search::{localize, search_paths};
use crate::scene::{Point, Scenario, Track};
use crate::selection::{nms_select, NmsMetric, PredictionSet};

/// Knobs of one harness/pipeline run on top of the scenario config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub kalman: KalmanConfig,
    /// Probability of dropping each non-final track sample.
    pub drop_rate: f64,
    /// Pad dropped samples with the nearest observed position and expose
    /// the observed mask; `false` is the ablation that zeroes dropped
    /// positions and hides the mask.
    pub pad: bool,
    pub seed: u64,
    pub nms_metric: NmsMetric,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            kalman: KalmanConfig::default(),
            drop_rate: 0.0,
            pad: true,
            seed: 0,
            nms_metric: NmsMetric::Endpoint,
        }
    }
}

/// Everything produced for one scenario.
#[derive(Debug, Clone)]
pub struct PredictOutput {
    pub prediction: PredictionSet,
    /// Score per feasible trajectory, generator order.
    pub scores: Vec<f64>,
    pub feasible: FeasibleSet,
    /// Frames of the reachable paths, parallel to feasible.reachable_paths.
    pub frames: Vec<FrenetFrame>,
}

fn mix_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64)
}

/// Applies the drop protocol to one track and prepares the representation
/// variant: nearest-observed padding with mask, or the no-padding ablation
/// (dropped positions zeroed, mask hidden). The ablation only changes what
/// the evaluator sees; state estimation always works on the padded track
/// (see `estimation_track`).
fn prepare_track(track: &Track, opts: &RunOptions, index: usize) -> Track {
    if opts.drop_rate == 0.0 {
        return track.clone();
    }
    let dropped = drop_track(track, opts.drop_rate, mix_seed(opts.seed, index));
    if opts.pad {
        pad_track(&dropped)
    } else {
        let mut t = dropped;
        for s in &mut t.samples {
            if !s.observed {
                s.position = Point::new(0.0, 0.0);
                s.observed = true; // mask withheld from the model
            }
        }
        t
    }
}

/// The target track used for state estimation and localization: dropped
/// samples are always padded here, so the generator side is identical
/// across representation variants.
fn estimation_track(track: &Track, opts: &RunOptions) -> Track {
    if opts.drop_rate == 0.0 {
        return track.clone();
    }
    pad_track(&drop_track(track, opts.drop_rate, mix_seed(opts.seed, 0)))
}

/// Builds the reference frames and the target's start state on each.
/// Paths the target cannot be projected onto are skipped.
fn target_frames(scenario: &Scenario, target: &Track, opts: &RunOptions, cfg: &Config)
    -> Result<(Vec<FrenetFrame>, Vec<FrenetState>)> {
    let state = match scenario.target_current_state {
        Some(s) => s,
        None => estimate_state(target, &opts.kalman, cfg.frame_rate, Some(&scenario.lane_graph))?,
    };
    let roots = localize(&scenario.lane_graph, &state, cfg.lane_width)?;
    let paths = search_paths(
        &scenario.lane_graph,
        &roots,
        cfg.forward_dist,
        cfg.backward_dist,
        cfg.path_point_spacing,
    );
    let mut frames = Vec::new();
    let mut starts = Vec::new();
    for path in paths {
        let frame = match build_frame(path) {
            Ok(f) => f,
            Err(_) => continue,
        };
        match project(&frame, &state, cfg.lane_width) {
            Ok(start) => {
                frames.push(frame);
                starts.push(start);
            }
            Err(_) => continue,
        }
    }
    if frames.is_empty() {
        return Err(Error::EmptyFeasibleSet);
    }
    Ok((frames, starts))
}

/// Feature sequences for the evaluator, grouped per reachable path with
/// the target's track first in each group.
pub fn build_inputs(
    scenario: &Scenario,
    target: &Track,
    frames: &[FrenetFrame],
    feasible: &FeasibleSet,
    opts: &RunOptions,
) -> EvalInputs {
    let origin = target.last_position();
    let mut neighbors: Vec<Track> = Vec::new();
    for (k, t) in scenario.neighbor_tracks().enumerate() {
        neighbors.push(prepare_track(t, opts, k + 1));
    }
    let mut inputs = EvalInputs::default();
    for &path_idx in &feasible.reachable_paths {
        let frame = &frames[path_idx];
        inputs.paths.push(path_representation(frame, origin));
        let mut group = vec![track_representation(target, frame, origin)];
        for n in &neighbors {
            group.push(track_representation(n, frame, origin));
        }
        inputs.tracks.push(group);
        inputs.futures.push(
            feasible
                .trajectories
                .iter()
                .filter(|t| t.path_index == path_idx)
                .map(|t| future_representation(t, frame, origin))
                .collect(),
        );
    }
    inputs
}

/// Runs the full pipeline on one scenario.
pub fn predict_scenario(
    scenario: &Scenario,
    params: &ModelParams,
    opts: &RunOptions,
) -> Result<PredictOutput> {
    let cfg = &scenario.config;
    let target = prepare_track(scenario.target_track(), opts, 0);
    let est = estimation_track(scenario.target_track(), opts);
    let (frames, starts) = target_frames(scenario, &est, opts, cfg)?;
    let feasible = generate(&frames, &starts, &scenario.lane_graph, cfg)?;
    let inputs = build_inputs(scenario, &target, &frames, &feasible, opts);
    let scores = score(params, &inputs);
    let prediction = nms_select(
        &feasible.trajectories,
        &scores,
        cfg.num_modes,
        cfg.nms_threshold,
        opts.nms_metric,
    );
    Ok(PredictOutput {
        prediction,
        scores,
        feasible,
        frames,
    })
}

/// Builds one training example (encoded scene + soft labels) from a
/// scenario with ground truth.
pub fn build_example(
    scenario: &Scenario,
    opts: &RunOptions,
    tau: f64,
) -> Result<TrainExample> {
    let gt = scenario
        .ground_truth
        .as_ref()
        .ok_or_else(|| Error::invalid("ground_truth", "required for training"))?;
    let cfg = &scenario.config;
    let target = prepare_track(scenario.target_track(), opts, 0);
    let est = estimation_track(scenario.target_track(), opts);
    let (frames, starts) = target_frames(scenario, &est, opts, cfg)?;
    let feasible = generate(&frames, &starts, &scenario.lane_graph, cfg)?;
    let labels = make_labels(&feasible.trajectories, gt, tau)?;
    let inputs = build_inputs(scenario, &target, &frames, &feasible, opts);
    Ok(TrainExample { inputs, labels })
}

/// Dataset-level result: aggregate metrics plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessReport {
    pub aggregate: MetricsReport,
    pub scenarios: usize,
    /// Scenarios excluded because the pipeline failed (e.g. empty
    /// feasible set).
    pub failures: usize,
    pub per_scenario: Vec<Option<MetricsReport>>,
}

/// Runs the pipeline over a dataset and aggregates: means for the
/// distance metrics, ratios for miss rate and infeasibility. Failures are
/// counted and excluded, never fatal.
pub fn run_harness(
    scenarios: &[Scenario],
    params: &ModelParams,
    opts: &RunOptions,
) -> Result<HarnessReport> {
    assert!(!scenarios.is_empty());
    let mut per_scenario = Vec::with_capacity(scenarios.len());
    let mut sums = MetricsReport {
        min_ade: 0.0,
        min_fde: 0.0,
        miss_rate: 0.0,
        p_min_ade: 0.0,
        p_min_fde: 0.0,
        infeasibility: 0.0,
    };
    let mut ok = 0usize;
    for (i, scenario) in scenarios.iter().enumerate() {
        let scenario_opts = RunOptions {
            seed: mix_seed(opts.seed, i),
            ..*opts
        };
        let report = predict_scenario(scenario, params, &scenario_opts)
            .ok()
            .and_then(|out| {
                let gt = scenario.ground_truth.as_ref()?;
                let mut m = compute_metrics(&out.prediction, gt, &scenario.config).ok()?;
                let mut infeasible = 0usize;
                for t in &out.prediction.trajectories {
                    if audit_curvature(&t.positions(), scenario.config.kappa_max).ok()?
                        == Feasibility::Infeasible
                    {
                        infeasible += 1;
                    }
                }
                m.infeasibility = infeasible as f64 / out.prediction.len() as f64;
                Some(m)
            });
        if let Some(m) = &report {
            sums.min_ade += m.min_ade;
            sums.min_fde += m.min_fde;
            sums.miss_rate += m.miss_rate;
            sums.p_min_ade += m.p_min_ade;
            sums.p_min_fde += m.p_min_fde;
            sums.infeasibility += m.infeasibility;
            ok += 1;
        }
        per_scenario.push(report);
    }
    if ok == 0 {
        return Err(Error::EmptyFeasibleSet);
    }
    let n = ok as f64;
    Ok(HarnessReport {
        aggregate: MetricsReport {
            min_ade: sums.min_ade / n,
            min_fde: sums.min_fde / n,
            miss_rate: sums.miss_rate / n,
            p_min_ade: sums.p_min_ade / n,
            p_min_fde: sums.p_min_fde / n,
            infeasibility: sums.infeasibility / n,
        },
        scenarios: scenarios.len(),
        failures: scenarios.len() - ok,
        per_scenario,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{synthetic_scenario, SyntheticOptions};

    fn toy_params() -> ModelParams {
        ModelParams::new(16, 0)
    }

    #[test]
    fn predict_straight_scenario_end_to_end() {
        let scenario = synthetic_scenario(1, &SyntheticOptions::default());
        let out = predict_scenario(&scenario, &toy_params(), &RunOptions::default()).unwrap();
        assert!(!out.prediction.is_empty());
        assert!(out.prediction.len() <= scenario.config.num_modes);
        let sum: f64 = out.prediction.probabilities.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert_eq!(out.scores.len(), out.feasible.len());
    }

    #[test]
    fn predict_deterministic_per_seed() {
        let scenario = synthetic_scenario(7, &SyntheticOptions::default());
        let opts = RunOptions {
            drop_rate: 0.3,
            seed: 42,
            ..RunOptions::default()
        };
        let a = predict_scenario(&scenario, &toy_params(), &opts).unwrap();
        let b = predict_scenario(&scenario, &toy_params(), &opts).unwrap();
        assert_eq!(a.prediction, b.prediction);
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn zero_drop_equals_no_drop() {
        let scenario = synthetic_scenario(3, &SyntheticOptions::default());
        let base = predict_scenario(&scenario, &toy_params(), &RunOptions::default()).unwrap();
        let with_seed = predict_scenario(
            &scenario,
            &toy_params(),
            &RunOptions {
                seed: 99,
                ..RunOptions::default()
            },
        )
        .unwrap();
        assert_eq!(base.prediction, with_seed.prediction);
    }

    #[test]
    fn harness_aggregates_match_per_scenario_recomputation() {
        let scenarios: Vec<Scenario> = (0..8)
            .map(|i| synthetic_scenario(100 + i, &SyntheticOptions::default()))
            .collect();
        let params = toy_params();
        let opts = RunOptions::default();
        let report = run_harness(&scenarios, &params, &opts).unwrap();
        assert_eq!(report.failures, 0);
        let kept: Vec<&MetricsReport> = report.per_scenario.iter().flatten().collect();
        let mean =
            kept.iter().map(|m| m.min_ade).sum::<f64>() / kept.len() as f64;
        assert!((report.aggregate.min_ade - mean).abs() < 1e-12);
        let mr = kept.iter().map(|m| m.miss_rate).sum::<f64>() / kept.len() as f64;
        assert!((report.aggregate.miss_rate - mr).abs() < 1e-12);
    }

    #[test]
    fn failures_excluded_not_fatal() {
        let mut bad = synthetic_scenario(5, &SyntheticOptions::default());
        // strand the target far away from every lane segment
        for t in &mut bad.tracks {
            for s in &mut t.samples {
                s.position = s.position.add(Point::new(0.0, 500.0));
            }
        }
        bad.target_current_state = None;
        let good = synthetic_scenario(6, &SyntheticOptions::default());
        let report = run_harness(
            &[bad, good],
            &toy_params(),
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(report.failures, 1);
        assert!(report.per_scenario[0].is_none());
        assert!(report.per_scenario[1].is_some());
    }

    #[test]
    fn build_example_labels_normalized() {
        let scenario = synthetic_scenario(11, &SyntheticOptions::default());
        let ex = build_example(&scenario, &RunOptions::default(), 1.0).unwrap();
        assert_eq!(ex.labels.len(), ex.inputs.num_futures());
        assert!((ex.labels.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
