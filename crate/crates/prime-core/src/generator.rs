//! Sampling-based trajectory generation: quartic longitudinal and quintic
//! lateral boundary-value polynomials per reference path, combined and
//! filtered against kinematic and environmental constraints.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::frenet::{to_cartesian, FrenetFrame, FrenetState};
use crate::scene::{LaneGraph, Point, TrajStep, Trajectory};

/// Time polynomial with coefficients c0..c_degree over [0, T].
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialCurve {
    pub coefficients: Vec<f64>,
    pub horizon: f64,
}

impl PolynomialCurve {
    pub fn eval(&self, t: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn deriv1(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, c)| acc * t + i as f64 * c)
    }

    pub fn deriv2(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (i, c)| acc * t + (i * (i - 1)) as f64 * c)
    }
}

/// Quartic longitudinal curve with boundary conditions
/// s(0)=s0, s'(0)=v0, s''(0)=0, s'(T)=vt, s''(T)=0; s(T) is free.
pub fn fit_quartic_lon(s0: f64, v0: f64, vt: f64, horizon: f64) -> PolynomialCurve {
    debug_assert!(horizon > 0.0);
    let dv = vt - v0;
    let t = horizon;
    // from s''(T)=0: c3 = -2 c4 T; substituting into s'(T)=vt gives c4
    let c4 = -dv / (2.0 * t * t * t);
    let c3 = dv / (t * t);
    PolynomialCurve {
        coefficients: vec![s0, v0, 0.0, c3, c4],
        horizon,
    }
}

/// Quintic lateral curve with boundary conditions
/// d(0)=d0, d'(0)=v0, d''(0)=0, d(T)=dt, d'(T)=0, d''(T)=0.
pub fn fit_quintic_lat(d0: f64, v0: f64, dt: f64, horizon: f64) -> PolynomialCurve {
    debug_assert!(horizon > 0.0);
    let t = horizon;
    let (t2, t3, t4, t5) = (t * t, t * t * t, t * t * t * t, t * t * t * t * t);
    // 3x3 system for c3, c4, c5
    let rhs = [dt - d0 - v0 * t, -v0, 0.0];
    let mut m = [
        [t3, t4, t5, rhs[0]],
        [3.0 * t2, 4.0 * t3, 5.0 * t4, rhs[1]],
        [6.0 * t, 12.0 * t2, 20.0 * t3, rhs[2]],
    ];
    // gaussian elimination with partial pivoting
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let c5 = m[2][3] / m[2][2];
    let c4 = (m[1][3] - m[1][2] * c5) / m[1][1];
    let c3 = (m[0][3] - m[0][2] * c5 - m[0][1] * c4) / m[0][0];
    PolynomialCurve {
        coefficients: vec![d0, v0, 0.0, c3, c4, c5],
        horizon,
    }
}

/// Longitudinal end-velocity samples: uniform over
/// [max(0, v0 - decel*T_F), min(v_hat, v0 + accel*T_F)] inclusive.
pub fn lon_sample_targets(v0: f64, max_speed: f64, cfg: &Config) -> Vec<f64> {
    let t = cfg.prediction_horizon;
    let lo = (v0 - cfg.decel_limit * t).max(0.0);
    let hi = (v0 + cfg.accel_limit * t).min(max_speed);
    if hi <= lo {
        return vec![lo];
    }
    let n = cfg.n_lon_samples;
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Lateral end-offset samples: uniform over [-d_lane/2, d_lane/2]
/// inclusive; the odd count guarantees offset 0 is sampled.
pub fn lat_sample_targets(cfg: &Config) -> Vec<f64> {
    let half = cfg.lane_width / 2.0;
    let n = cfg.n_lat_samples;
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64)
        .collect()
}

/// Constraint violation found by the feasibility check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    Speed { step: usize, v: f64 },
    Acceleration { step: usize, a: f64 },
    Curvature { step: usize, kappa: f64 },
    Collision { step: usize },
}

fn point_in_convex_polygon(p: Point, poly: &[Point]) -> bool {
    let mut sign = 0.0_f64;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = b.sub(a).cross(p.sub(a));
        if c.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    true
}

/// Checks every step of a trajectory against the kinematic limits and
/// static obstacles. A violation is a value, not an error.
pub fn check_feasibility(
    traj: &Trajectory,
    graph: &LaneGraph,
    cfg: &Config,
) -> std::result::Result<(), Violation> {
    for (i, step) in traj.steps.iter().enumerate() {
        if step.v < 0.0 || step.v > cfg.v_max {
            return Err(Violation::Speed { step: i, v: step.v });
        }
        if step.a.abs() > cfg.a_max {
            return Err(Violation::Acceleration { step: i, a: step.a });
        }
        if step.kappa.abs() > cfg.kappa_max {
            return Err(Violation::Curvature {
                step: i,
                kappa: step.kappa,
            });
        }
        for poly in &graph.static_obstacles {
            if point_in_convex_polygon(step.position(), poly) {
                return Err(Violation::Collision { step: i });
            }
        }
    }
    Ok(())
}

/// Feasible trajectory set grouped by reference path.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    /// Indices into the caller's frame list that retained >= 1 trajectory.
    pub reachable_paths: Vec<usize>,
    pub trajectories: Vec<Trajectory>,
    /// (lon_index, lat_index) per trajectory, parallel to `trajectories`.
    pub sample_indices: Vec<(usize, usize)>,
}

impl FeasibleSet {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Trajectory count per reachable path, in `reachable_paths` order.
    pub fn counts_per_path(&self) -> Vec<usize> {
        self.reachable_paths
            .iter()
            .map(|&p| {
                self.trajectories
                    .iter()
                    .filter(|t| t.path_index == p)
                    .count()
            })
            .collect()
    }
}

/// Builds one candidate trajectory on a frame from the sampled polynomial
/// pair, discretized at dt. Returns None when the sampled longitudinal
/// speed dips below zero (treated as a kinematic violation) or the
/// conversion is singular.
pub fn build_candidate(
    frame: &FrenetFrame,
    path_index: usize,
    lon: &PolynomialCurve,
    lat: &PolynomialCurve,
    cfg: &Config,
) -> Option<Trajectory> {
    let steps = cfg.future_steps();
    let mut out = Vec::with_capacity(steps);
    for k in 1..=steps {
        let t = k as f64 * cfg.traj_time_step;
        let s_dot = lon.deriv1(t);
        if s_dot < -1e-9 {
            return None;
        }
        let fs = FrenetState {
            s: lon.eval(t),
            s_dot: s_dot.max(0.0),
            s_ddot: lon.deriv2(t),
            d: lat.eval(t),
            d_dot: lat.deriv1(t),
            d_ddot: lat.deriv2(t),
        };
        let cart = match to_cartesian(frame, &fs) {
            Ok(c) => c,
            Err(_) => return None,
        };
        out.push(TrajStep {
            x: cart.position.x,
            y: cart.position.y,
            v: cart.speed,
            a: cart.acceleration,
            kappa: cart.curvature,
            theta: cart.heading,
            s: fs.s,
            d: fs.d,
        });
    }
    Some(Trajectory {
        path_index,
        steps: out,
    })
}

/// Effective sampling speed cap for a path: the global cap possibly
/// tightened by the speed limit of the segment the target starts on.
fn path_speed_cap(frame: &FrenetFrame, graph: &LaneGraph, start_s: f64, cfg: &Config) -> f64 {
    let mut acc = 0.0;
    for id in &frame.path.segment_ids {
        let seg = &graph.segments[id];
        acc += seg.length();
        if start_s <= acc {
            if let Some(limit) = seg.speed_limit {
                return cfg.max_sample_speed.min(limit);
            }
            break;
        }
    }
    cfg.max_sample_speed
}

/// Full generation: per frame, all lon x lat combinations, converted
/// stepwise and filtered; frames with zero survivors are dropped.
/// Ordering is deterministic: (path, lon_index, lat_index).
pub fn generate(
    frames: &[FrenetFrame],
    starts: &[FrenetState],
    graph: &LaneGraph,
    cfg: &Config,
) -> Result<FeasibleSet> {
    assert_eq!(frames.len(), starts.len());
    let mut reachable_paths = Vec::new();
    let mut trajectories = Vec::new();
    let mut sample_indices = Vec::new();
    for (path_index, (frame, start)) in frames.iter().zip(starts).enumerate() {
        let cap = path_speed_cap(frame, graph, start.s, cfg);
        let lon_targets = lon_sample_targets(start.s_dot, cap, cfg);
        let lat_targets = lat_sample_targets(cfg);
        let lons: Vec<PolynomialCurve> = lon_targets
            .iter()
            .map(|&vt| fit_quartic_lon(start.s, start.s_dot, vt, cfg.prediction_horizon))
            .collect();
        let lats: Vec<PolynomialCurve> = lat_targets
            .iter()
            .map(|&dt| fit_quintic_lat(start.d, start.d_dot, dt, cfg.prediction_horizon))
            .collect();
        let mut any = false;
        for (li, lon) in lons.iter().enumerate() {
            for (di, lat) in lats.iter().enumerate() {
                if let Some(traj) = build_candidate(frame, path_index, lon, lat, cfg) {
                    if check_feasibility(&traj, graph, cfg).is_ok() {
                        trajectories.push(traj);
                        sample_indices.push((li, di));
                        any = true;
                    }
                }
            }
        }
        if any {
            reachable_paths.push(path_index);
        }
    }
    if trajectories.is_empty() {
        return Err(Error::EmptyFeasibleSet);
    }
    Ok(FeasibleSet {
        reachable_paths,
        trajectories,
        sample_indices,
    })
}
