//! Current-state estimation from noisy discrete tracks (constant-velocity
//! Kalman filter) and the imperfect-tracking drop/pad protocol.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::path_search::localize;
use crate::scene::{ActorType, AgentState, LaneGraph, Point, Track, TrackSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    /// White-noise acceleration intensity [(m/s^2)^2].
    pub process_noise: f64,
    /// Position measurement variance [m^2].
    pub measurement_noise: f64,
    /// Initial state variance [m^2].
    pub initial_covariance: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            process_noise: 1.0,
            measurement_noise: 0.25,
            initial_covariance: 100.0,
        }
    }
}

/// 4-state [x, y, vx, vy] constant-velocity filter. Since the two axes are
/// uncoupled and share noise parameters, the covariance is kept per-axis
/// as a 2x2 block.
struct AxisFilter {
    x: [f64; 2],
    p: [[f64; 2]; 2],
}

impl AxisFilter {
    fn new(pos: f64, vel: f64, p0: f64) -> Self {
        AxisFilter {
            x: [pos, vel],
            p: [[p0, 0.0], [0.0, p0]],
        }
    }

    fn predict(&mut self, dt: f64, q: f64) {
        let [pos, vel] = self.x;
        self.x = [pos + vel * dt, vel];
        let p = self.p;
        // F P F^T with F = [[1, dt], [0, 1]]
        let p00 = p[0][0] + dt * (p[1][0] + p[0][1]) + dt * dt * p[1][1];
        let p01 = p[0][1] + dt * p[1][1];
        let p10 = p[1][0] + dt * p[1][1];
        let p11 = p[1][1];
        // discrete white-noise acceleration model
        let q00 = q * dt * dt * dt * dt / 4.0;
        let q01 = q * dt * dt * dt / 2.0;
        let q11 = q * dt * dt;
        self.p = [[p00 + q00, p01 + q01], [p10 + q01, p11 + q11]];
    }

    fn update(&mut self, z: f64, r: f64) {
        let s = self.p[0][0] + r;
        let k0 = self.p[0][0] / s;
        let k1 = self.p[1][0] / s;
        let innov = z - self.x[0];
        self.x[0] += k0 * innov;
        self.x[1] += k1 * innov;
        let p = self.p;
        self.p = [
            [(1.0 - k0) * p[0][0], (1.0 - k0) * p[0][1]],
            [p[1][0] - k1 * p[0][0], p[1][1] - k1 * p[0][1]],
        ];
    }
}

/// Estimates the target's current state from its track: filtered final
/// position, speed and heading from the filtered velocity; acceleration
/// and turn rate are zero. Unobserved samples contribute prediction-only
/// steps. Below 0.5 m/s the velocity heading is unreliable, so when a
/// lane graph is supplied the heading falls back to the nearest lane
/// tangent.
pub fn estimate_state(
    track: &Track,
    kc: &KalmanConfig,
    frame_rate: f64,
    graph: Option<&LaneGraph>,
) -> Result<AgentState> {
    let observed = track.observed_count();
    if observed < 2 {
        return Err(Error::InsufficientObservations(observed));
    }
    let dt = 1.0 / frame_rate;
    // two-point differencing initialization: position from the first
    // observed sample, velocity from the first two
    let mut obs = track
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.observed);
    let (i0, first) = obs.next().expect("at least one observed");
    let (i1, second) = obs.next().expect("at least two observed");
    let v0 = second
        .position
        .sub(first.position)
        .scale(1.0 / ((i1 - i0) as f64 * dt));
    let mut fx = AxisFilter::new(first.position.x, v0.x, kc.initial_covariance);
    let mut fy = AxisFilter::new(first.position.y, v0.y, kc.initial_covariance);
    let mut started = false;
    for sample in &track.samples {
        if started {
            fx.predict(dt, kc.process_noise);
            fy.predict(dt, kc.process_noise);
        }
        if sample.observed {
            if !started {
                started = true;
            }
            fx.update(sample.position.x, kc.measurement_noise);
            fy.update(sample.position.y, kc.measurement_noise);
        }
    }
    let position = Point::new(fx.x[0], fy.x[0]);
    let vel = Point::new(fx.x[1], fy.x[1]);
    let speed = vel.norm();
    let heading = if speed >= 0.5 {
        vel.y.atan2(vel.x)
    } else if let Some(g) = graph {
        let probe = AgentState {
            position,
            heading: 0.0,
            speed,
            turn_rate: 0.0,
            actor_type: ActorType::Vehicle,
            timestamp: 0.0,
        };
        match localize(g, &probe, f64::INFINITY) {
            Ok(roots) => {
                let seg = &g.segments[&roots[0]];
                let mut best = (f64::INFINITY, Point::new(1.0, 0.0));
                for w in seg.centerline.windows(2) {
                    let dir = w[1].sub(w[0]);
                    let len2 = dir.dot(dir);
                    let t = (position.sub(w[0]).dot(dir) / len2).clamp(0.0, 1.0);
                    let d = position.dist(w[0].add(dir.scale(t)));
                    if d < best.0 {
                        best = (d, dir);
                    }
                }
                best.1.y.atan2(best.1.x)
            }
            Err(_) => vel.y.atan2(vel.x),
        }
    } else {
        vel.y.atan2(vel.x)
    };
    Ok(AgentState {
        position,
        heading,
        speed,
        turn_rate: 0.0,
        actor_type: ActorType::Vehicle,
        timestamp: (track.samples.len() - 1) as f64 * dt,
    })
}

/// Copies each unobserved sample's position from the nearest observed
/// sample in time; earlier wins ties. Observed flags are preserved.
pub fn pad_track(track: &Track) -> Track {
    let n = track.samples.len();
    let mut out = track.samples.clone();
    for i in 0..n {
        if out[i].observed {
            continue;
        }
        let mut best: Option<(usize, usize)> = None; // (distance, index)
        for (j, s) in track.samples.iter().enumerate() {
            if !s.observed {
                continue;
            }
            let dist = i.abs_diff(j);
            let better = match best {
                None => true,
                Some((bd, bj)) => dist < bd || (dist == bd && j < bj),
            };
            if better {
                best = Some((dist, j));
            }
        }
        if let Some((_, j)) = best {
            out[i].position = track.samples[j].position;
        }
    }
    Track {
        agent_id: track.agent_id.clone(),
        samples: out,
    }
}

/// Marks each non-final sample unobserved with probability `drop_rate`
/// under a seeded generator. The final sample always stays observed.
pub fn drop_track(track: &Track, drop_rate: f64, seed: u64) -> Track {
    assert!((0.0..1.0).contains(&drop_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = track.samples.len();
    let samples = track
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let dropped = i + 1 < n && rng.gen::<f64>() < drop_rate;
            TrackSample {
                position: s.position,
                observed: s.observed && !dropped,
            }
        })
        .collect();
    Track {
        agent_id: track.agent_id.clone(),
        samples,
    }
}
