use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pipeline configuration. Defaults follow the common urban-driving setting:
/// 2 s observation at 10 Hz, 3 s prediction, 35 x 9 sampling grid per path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Observed horizon T_P [s].
    pub observed_horizon: f64,
    /// Prediction horizon T_F [s].
    pub prediction_horizon: f64,
    /// Track sampling rate [Hz].
    pub frame_rate: f64,
    /// Number of output modes K.
    pub num_modes: usize,
    /// Forward path-search distance D_F [m].
    pub forward_dist: f64,
    /// Backward path-search distance D_B [m].
    pub backward_dist: f64,
    /// Deceleration limit used for longitudinal sampling [m/s^2].
    pub decel_limit: f64,
    /// Acceleration limit used for longitudinal sampling [m/s^2].
    pub accel_limit: f64,
    /// Maximum sampled end speed [m/s].
    pub max_sample_speed: f64,
    /// Lane width d_lane [m].
    pub lane_width: f64,
    /// Longitudinal sample count.
    pub n_lon_samples: usize,
    /// Lateral sample count (odd, so the zero offset is sampled).
    pub n_lat_samples: usize,
    /// Kinematic speed bound [m/s].
    pub v_max: f64,
    /// Kinematic acceleration bound [m/s^2].
    pub a_max: f64,
    /// Kinematic curvature bound [1/m].
    pub kappa_max: f64,
    /// Label softmax temperature tau.
    pub label_temperature: f64,
    /// Trajectory time step [s].
    pub traj_time_step: f64,
    /// Path waypoint spacing [m].
    pub path_point_spacing: f64,
    /// NMS endpoint-distance threshold [m].
    pub nms_threshold: f64,
    /// Miss-rate endpoint threshold [m].
    pub miss_threshold: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            observed_horizon: 2.0,
            prediction_horizon: 3.0,
            frame_rate: 10.0,
            num_modes: 6,
            forward_dist: 140.0,
            backward_dist: 20.0,
            decel_limit: 6.0,
            accel_limit: 6.0,
            max_sample_speed: 30.0,
            lane_width: 5.0,
            n_lon_samples: 35,
            n_lat_samples: 9,
            v_max: 33.33,
            a_max: 8.0,
            kappa_max: 0.33,
            label_temperature: 1.0,
            traj_time_step: 0.1,
            path_point_spacing: 2.0,
            nms_threshold: 2.0,
            miss_threshold: 2.0,
        }
    }
}

impl Config {
    /// Number of discrete future steps (T_F / dt).
    pub fn future_steps(&self) -> usize {
        (self.prediction_horizon / self.traj_time_step).round() as usize
    }

    /// Number of observed track samples (T_P * frame_rate).
    pub fn track_len(&self) -> usize {
        (self.observed_horizon * self.frame_rate).round() as usize
    }
}

/// Returns the config unchanged iff every invariant holds; otherwise an
/// error listing every violation.
pub fn validate_config(c: Config) -> Result<Config> {
    let mut problems = Vec::new();
    let mut positive = |name: &str, v: f64| {
        if !(v > 0.0) {
            problems.push(format!("{name} must be strictly positive, got {v}"));
        }
    };
    positive("observed_horizon", c.observed_horizon);
    positive("prediction_horizon", c.prediction_horizon);
    positive("frame_rate", c.frame_rate);
    positive("forward_dist", c.forward_dist);
    positive("backward_dist", c.backward_dist);
    positive("max_sample_speed", c.max_sample_speed);
    positive("lane_width", c.lane_width);
    positive("v_max", c.v_max);
    positive("a_max", c.a_max);
    positive("kappa_max", c.kappa_max);
    positive("label_temperature", c.label_temperature);
    positive("traj_time_step", c.traj_time_step);
    positive("path_point_spacing", c.path_point_spacing);
    positive("nms_threshold", c.nms_threshold);
    positive("miss_threshold", c.miss_threshold);
    if c.num_modes == 0 {
        problems.push("num_modes must be >= 1".into());
    }
    if c.n_lon_samples < 2 {
        problems.push(format!(
            "n_lon_samples must be >= 2, got {}",
            c.n_lon_samples
        ));
    }
    if c.n_lat_samples < 1 {
        problems.push("n_lat_samples must be >= 1".into());
    } else if c.n_lat_samples % 2 == 0 {
        problems.push(format!(
            "n_lat_samples must be odd so the zero offset is sampled, got {}",
            c.n_lat_samples
        ));
    }
    if c.decel_limit < 0.0 {
        problems.push(format!("decel_limit must be >= 0, got {}", c.decel_limit));
    }
    if c.accel_limit < 0.0 {
        problems.push(format!("accel_limit must be >= 0, got {}", c.accel_limit));
    }
    if problems.is_empty() {
        Ok(c)
    } else {
        Err(Error::ConfigInvalid(problems))
    }
}
