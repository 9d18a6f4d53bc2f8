//! Two-stage vehicle trajectory prediction.
//!
//! A model-based generator searches reachable lane paths, samples
//! boundary-value polynomial trajectories in a Frenet frame and filters
//! them against kinematic and environmental constraints; a learning-based
//! evaluator scores the feasible set with scaled dot-product attention and
//! a max-entropy head, and NMS selection turns scores into a multimodal
//! prediction set with probabilities.

pub mod config;
pub mod error;
pub mod estimation;
pub mod evaluator;
pub mod frenet;
pub mod generator;
pub mod harness;
pub mod metrics;
pub mod path_search;
pub mod scene;
pub mod selection;
pub mod synthetic;

pub use config::{validate_config, Config};
pub use error::{Error, Result};
pub use scene::{
    load_predictions, load_scenario, save_predictions, AgentState, LaneGraph, LaneSegment, Point,
    Scenario, Track, TrajStep, Trajectory,
};
pub use selection::PredictionSet;
