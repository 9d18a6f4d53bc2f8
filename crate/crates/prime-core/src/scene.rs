//! Domain types for maps, tracks, scenarios and predictions, plus the
//! self-contained JSON scenario format.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::{validate_config, Config};
use crate::error::{Error, Result};
use crate::selection::PredictionSet;

/// 2D point / vector in meters, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point { x: v[0], y: v[1] }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the cross product.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).norm()
    }

    /// Rotated by +90 degrees (left normal).
    pub fn left_normal(self) -> Point {
        Point::new(-self.y, self.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorType {
    Vehicle,
    Other,
}

/// Instantaneous agent state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: Point,
    /// Heading in (-pi, pi].
    pub heading: f64,
    /// Speed, >= 0.
    pub speed: f64,
    pub turn_rate: f64,
    pub actor_type: ActorType,
    pub timestamp: f64,
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub position: Point,
    pub observed: bool,
}

/// Fixed-rate observed history of one agent over T_P.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub agent_id: String,
    pub samples: Vec<TrackSample>,
}

impl Track {
    pub fn observed_count(&self) -> usize {
        self.samples.iter().filter(|s| s.observed).count()
    }

    pub fn last_position(&self) -> Point {
        self.samples.last().expect("track non-empty").position
    }

    /// Type invariants independent of any config: non-empty, at least one
    /// observed sample, final sample observed.
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::invalid("track", "must contain samples"));
        }
        if self.observed_count() == 0 {
            return Err(Error::invalid(
                format!("track {}", self.agent_id),
                "must contain at least one observed sample",
            ));
        }
        if !self.samples.last().unwrap().observed {
            return Err(Error::invalid(
                format!("track {}", self.agent_id),
                "final sample must be observed",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneSegment {
    pub id: String,
    pub centerline: Vec<Point>,
    pub predecessors: Vec<String>,
    pub successors: Vec<String>,
    pub speed_limit: Option<f64>,
}

impl LaneSegment {
    pub fn length(&self) -> f64 {
        self.centerline
            .windows(2)
            .map(|w| w[0].dist(w[1]))
            .sum()
    }
}

/// The map M: lane segments with connectivity plus static obstacles
/// (convex polygons).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LaneGraph {
    pub segments: BTreeMap<String, LaneSegment>,
    pub static_obstacles: Vec<Vec<Point>>,
}

impl LaneGraph {
    pub fn validate(&self) -> Result<()> {
        for seg in self.segments.values() {
            if seg.centerline.len() < 2 {
                return Err(Error::invalid(
                    format!("segment {}", seg.id),
                    "centerline needs at least 2 points",
                ));
            }
            for (i, w) in seg.centerline.windows(2).enumerate() {
                if w[0].dist(w[1]) < 1e-9 {
                    return Err(Error::invalid(
                        format!("segment {}", seg.id),
                        format!("centerline points {i} and {} coincide", i + 1),
                    ));
                }
            }
            for succ in &seg.successors {
                let other = self.segments.get(succ).ok_or_else(|| {
                    Error::invalid(
                        format!("segment {}", seg.id),
                        format!("successor {succ} does not resolve"),
                    )
                })?;
                if !other.predecessors.contains(&seg.id) {
                    return Err(Error::invalid(
                        format!("segment {}", seg.id),
                        format!("successor {succ} does not list it as predecessor"),
                    ));
                }
            }
            for pred in &seg.predecessors {
                let other = self.segments.get(pred).ok_or_else(|| {
                    Error::invalid(
                        format!("segment {}", seg.id),
                        format!("predecessor {pred} does not resolve"),
                    )
                })?;
                if !other.successors.contains(&seg.id) {
                    return Err(Error::invalid(
                        format!("segment {}", seg.id),
                        format!("predecessor {pred} does not list it as successor"),
                    ));
                }
            }
        }
        for (i, poly) in self.static_obstacles.iter().enumerate() {
            if poly.len() < 3 {
                return Err(Error::invalid(
                    format!("obstacle {i}"),
                    "polygon needs at least 3 vertices",
                ));
            }
            let area: f64 = poly
                .windows(2)
                .map(|w| w[0].cross(w[1]))
                .sum::<f64>()
                + poly.last().unwrap().cross(poly[0]);
            if area.abs() < 1e-9 {
                return Err(Error::invalid(
                    format!("obstacle {i}"),
                    "polygon is degenerate (zero area)",
                ));
            }
        }
        Ok(())
    }
}

/// One prediction problem: map, agent tracks (one target), optional
/// current-state override and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub lane_graph: LaneGraph,
    pub tracks: Vec<Track>,
    pub target_index: usize,
    pub target_current_state: Option<AgentState>,
    pub ground_truth: Option<Vec<Point>>,
    pub config: Config,
}

impl Scenario {
    pub fn target_track(&self) -> &Track {
        &self.tracks[self.target_index]
    }

    pub fn neighbor_tracks(&self) -> impl Iterator<Item = &Track> {
        let tgt = self.target_index;
        self.tracks
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != tgt)
            .map(|(_, t)| t)
    }

    pub fn validate(&self) -> Result<()> {
        self.lane_graph.validate()?;
        if self.target_index >= self.tracks.len() {
            return Err(Error::invalid("agents", "exactly one target required"));
        }
        let track_len = self.config.track_len();
        for t in &self.tracks {
            t.validate()?;
            if t.samples.len() != track_len {
                return Err(Error::invalid(
                    format!("track {}", t.agent_id),
                    format!(
                        "length {} does not match T_P x frame_rate = {track_len}",
                        t.samples.len()
                    ),
                ));
            }
        }
        if let Some(gt) = &self.ground_truth {
            let expect = (self.config.prediction_horizon * self.config.frame_rate).round() as usize;
            if gt.len() != expect {
                return Err(Error::invalid(
                    "ground_truth",
                    format!("length {} does not match T_F x frame_rate = {expect}", gt.len()),
                ));
            }
        }
        if let Some(st) = &self.target_current_state {
            if st.speed < 0.0 {
                return Err(Error::invalid("target_current_state.speed", "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// One time step of a generated full-state trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajStep {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub a: f64,
    pub kappa: f64,
    pub theta: f64,
    pub s: f64,
    pub d: f64,
}

impl TrajStep {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Time-discretized full-state future over T_F at dt.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Index of the reference path this trajectory follows.
    pub path_index: usize,
    pub steps: Vec<TrajStep>,
}

impl Trajectory {
    pub fn endpoint(&self) -> Point {
        self.steps.last().expect("trajectory non-empty").position()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.steps.iter().map(|s| s.position()).collect()
    }
}

// ---------------------------------------------------------------------------
// Scenario JSON document
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SegmentDoc {
    id: String,
    centerline: Vec<Point>,
    #[serde(default)]
    predecessors: Vec<String>,
    #[serde(default)]
    successors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed_limit: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct MapDoc {
    segments: Vec<SegmentDoc>,
    #[serde(default)]
    obstacles: Vec<Vec<Point>>,
}

#[derive(Serialize, Deserialize)]
struct SampleDoc {
    x: f64,
    y: f64,
    observed: bool,
}

#[derive(Serialize, Deserialize)]
struct AgentDoc {
    id: String,
    #[serde(default)]
    is_target: bool,
    track: Vec<SampleDoc>,
}

#[derive(Serialize, Deserialize)]
struct CurrentStateDoc {
    x: f64,
    y: f64,
    heading: f64,
    speed: f64,
    #[serde(default)]
    turn_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct ScenarioDoc {
    map: MapDoc,
    agents: Vec<AgentDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_current_state: Option<CurrentStateDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<Config>,
}

/// Parses and validates a scenario document. Invariant violations are
/// errors, never silently fixed.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let doc: ScenarioDoc = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    let mut segments = BTreeMap::new();
    for s in doc.map.segments {
        if segments.contains_key(&s.id) {
            return Err(Error::invalid("map.segments", format!("duplicate id {}", s.id)));
        }
        segments.insert(
            s.id.clone(),
            LaneSegment {
                id: s.id,
                centerline: s.centerline,
                predecessors: s.predecessors,
                successors: s.successors,
                speed_limit: s.speed_limit,
            },
        );
    }
    let lane_graph = LaneGraph {
        segments,
        static_obstacles: doc.map.obstacles,
    };
    let mut tracks = Vec::new();
    let mut target_index = None;
    for (i, a) in doc.agents.iter().enumerate() {
        if a.is_target {
            if target_index.is_some() {
                return Err(Error::invalid("agents", "more than one target"));
            }
            target_index = Some(i);
        }
        tracks.push(Track {
            agent_id: a.id.clone(),
            samples: a
                .track
                .iter()
                .map(|s| TrackSample {
                    position: Point::new(s.x, s.y),
                    observed: s.observed,
                })
                .collect(),
        });
    }
    let target_index =
        target_index.ok_or_else(|| Error::invalid("agents", "exactly one target required"))?;
    let config = validate_config(doc.config.unwrap_or_default())?;
    let target_current_state = doc.target_current_state.map(|c| AgentState {
        position: Point::new(c.x, c.y),
        heading: wrap_angle(c.heading),
        speed: c.speed,
        turn_rate: c.turn_rate,
        actor_type: ActorType::Vehicle,
        timestamp: 0.0,
    });
    let scenario = Scenario {
        lane_graph,
        tracks,
        target_index,
        target_current_state,
        ground_truth: doc.ground_truth,
        config,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Serializes a scenario into the same document format `load_scenario`
/// accepts, with the full config snapshot included.
pub fn scenario_to_json(s: &Scenario) -> String {
    let doc = ScenarioDoc {
        map: MapDoc {
            segments: s
                .lane_graph
                .segments
                .values()
                .map(|seg| SegmentDoc {
                    id: seg.id.clone(),
                    centerline: seg.centerline.clone(),
                    predecessors: seg.predecessors.clone(),
                    successors: seg.successors.clone(),
                    speed_limit: seg.speed_limit,
                })
                .collect(),
            obstacles: s.lane_graph.static_obstacles.clone(),
        },
        agents: s
            .tracks
            .iter()
            .enumerate()
            .map(|(i, t)| AgentDoc {
                id: t.agent_id.clone(),
                is_target: i == s.target_index,
                track: t
                    .samples
                    .iter()
                    .map(|smp| SampleDoc {
                        x: smp.position.x,
                        y: smp.position.y,
                        observed: smp.observed,
                    })
                    .collect(),
            })
            .collect(),
        ground_truth: s.ground_truth.clone(),
        target_current_state: s.target_current_state.map(|c| CurrentStateDoc {
            x: c.position.x,
            y: c.position.y,
            heading: c.heading,
            speed: c.speed,
            turn_rate: c.turn_rate,
        }),
        config: Some(s.config.clone()),
    };
    serde_json::to_string_pretty(&doc).expect("scenario serialize")
}

// ---------------------------------------------------------------------------
// Prediction JSON document
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FullStateStepDoc {
    v: f64,
    a: f64,
    kappa: f64,
    theta: f64,
    s: f64,
    d: f64,
}

#[derive(Serialize, Deserialize)]
struct PredictionDoc {
    trajectories: Vec<Vec<Point>>,
    probabilities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    full_state: Option<Vec<Vec<FullStateStepDoc>>>,
}

/// Serializes a prediction set to JSON. Probabilities must already sum
/// to 1 within 1e-9.
pub fn predictions_to_json(set: &PredictionSet) -> Result<String> {
    if set.trajectories.is_empty() {
        return Err(Error::invalid("prediction set", "must contain at least one trajectory"));
    }
    let total: f64 = set.probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "probabilities",
            format!("must sum to 1 within 1e-9, got {total}"),
        ));
    }
    let doc = PredictionDoc {
        trajectories: set.trajectories.iter().map(|t| t.positions()).collect(),
        probabilities: set.probabilities.clone(),
        full_state: Some(
            set.trajectories
                .iter()
                .map(|t| {
                    t.steps
                        .iter()
                        .map(|s| FullStateStepDoc {
                            v: s.v,
                            a: s.a,
                            kappa: s.kappa,
                            theta: s.theta,
                            s: s.s,
                            d: s.d,
                        })
                        .collect()
                })
                .collect(),
        ),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))
}

pub fn save_predictions(set: &PredictionSet, path: &std::path::Path) -> Result<()> {
    let json = predictions_to_json(set)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn predictions_from_json(text: &str) -> Result<PredictionSet> {
    let doc: PredictionDoc = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    if doc.trajectories.is_empty() {
        return Err(Error::invalid("trajectories", "must contain at least one"));
    }
    if doc.trajectories.len() != doc.probabilities.len() {
        return Err(Error::LengthMismatch {
            expected: doc.trajectories.len(),
            got: doc.probabilities.len(),
        });
    }
    let total: f64 = doc.probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "probabilities",
            format!("must sum to 1 within 1e-9, got {total}"),
        ));
    }
    let mut trajectories = Vec::new();
    for (i, pts) in doc.trajectories.iter().enumerate() {
        let steps: Vec<TrajStep> = match &doc.full_state {
            Some(fs) => {
                let states = fs.get(i).ok_or(Error::LengthMismatch {
                    expected: doc.trajectories.len(),
                    got: fs.len(),
                })?;
                if states.len() != pts.len() {
                    return Err(Error::LengthMismatch {
                        expected: pts.len(),
                        got: states.len(),
                    });
                }
                pts.iter()
                    .zip(states)
                    .map(|(p, st)| TrajStep {
                        x: p.x,
                        y: p.y,
                        v: st.v,
                        a: st.a,
                        kappa: st.kappa,
                        theta: st.theta,
                        s: st.s,
                        d: st.d,
                    })
                    .collect()
            }
            None => pts
                .iter()
                .map(|p| TrajStep {
                    x: p.x,
                    y: p.y,
                    v: 0.0,
                    a: 0.0,
                    kappa: 0.0,
                    theta: 0.0,
                    s: 0.0,
                    d: 0.0,
                })
                .collect(),
        };
        trajectories.push(Trajectory { path_index: 0, steps });
    }
    Ok(PredictionSet {
        trajectories,
        probabilities: doc.probabilities,
    })
}

pub fn load_predictions(path: &std::path::Path) -> Result<PredictionSet> {
    let text = std::fs::read_to_string(path)?;
    predictions_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_scenario_json() -> String {
        let track: Vec<String> = (0..20)
            .map(|i| format!(r#"{{"x": {}, "y": 0.0, "observed": true}}"#, i as f64 * 0.5))
            .collect();
        format!(
            r#"{{
              "map": {{"segments": [
                {{"id": "a", "centerline": [[0,0],[50,0]], "predecessors": [], "successors": []}}
              ], "obstacles": []}},
              "agents": [{{"id": "tgt", "is_target": true, "track": [{}]}}]
            }}"#,
            track.join(",")
        )
    }

    #[test]
    fn minimal_scenario_loads() {
        let sc = load_scenario(&minimal_scenario_json()).unwrap();
        assert_eq!(sc.lane_graph.segments.len(), 1);
        assert_eq!(sc.tracks.len(), 1);
        assert_eq!(sc.target_index, 0);
    }

    #[test]
    fn unobserved_final_sample_rejected() {
        let json = minimal_scenario_json().replace(
            r#"{"x": 9.5, "y": 0.0, "observed": true}"#,
            r#"{"x": 9.5, "y": 0.0, "observed": false}"#,
        );
        let err = load_scenario(&json).unwrap_err();
        assert!(err.to_string().contains("final sample"), "{err}");
    }

    #[test]
    fn parse_error_has_line_context() {
        let err = load_scenario("{ not json").unwrap_err();
        assert!(err.to_string().contains("line"));
    }

    #[test]
    fn asymmetric_connectivity_rejected() {
        let json = minimal_scenario_json().replace(
            r#""successors": []}"#,
            r#""successors": ["b"]}"#,
        );
        assert!(load_scenario(&json).is_err());
    }

    #[test]
    fn prediction_roundtrip_single_mode() {
        let step = TrajStep {
            x: 1.25,
            y: -2.5,
            v: 3.0,
            a: 0.1,
            kappa: 0.01,
            theta: 0.5,
            s: 1.0,
            d: 0.25,
        };
        let set = PredictionSet {
            trajectories: vec![Trajectory {
                path_index: 0,
                steps: vec![step; 5],
            }],
            probabilities: vec![1.0],
        };
        let json = predictions_to_json(&set).unwrap();
        let back = predictions_from_json(&json).unwrap();
        assert_eq!(back.trajectories[0].steps, set.trajectories[0].steps);
        assert_eq!(back.probabilities, set.probabilities);
    }

    #[test]
    fn empty_prediction_set_rejected() {
        let set = PredictionSet {
            trajectories: vec![],
            probabilities: vec![],
        };
        assert!(predictions_to_json(&set).is_err());
    }

    #[test]
    fn unnormalized_probabilities_rejected() {
        let step = TrajStep {
            x: 0.0,
            y: 0.0,
            v: 0.0,
            a: 0.0,
            kappa: 0.0,
            theta: 0.0,
            s: 0.0,
            d: 0.0,
        };
        let set = PredictionSet {
            trajectories: vec![Trajectory {
                path_index: 0,
                steps: vec![step],
            }],
            probabilities: vec![0.5],
        };
        assert!(predictions_to_json(&set).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-12);
    }
}
