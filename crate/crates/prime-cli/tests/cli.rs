//! End-to-end tests of the `prime` binary: exit-code contract, output
//! files, training behavior and byte-level determinism.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use assert_cmd::Command;
use tempfile::TempDir;

use prime_core::config::Config;
use prime_core::scene::{
    scenario_to_json, AgentState, LaneGraph, LaneSegment, Point, Scenario, Track, TrackSample,
};
use prime_core::synthetic::{synthetic_scenario, toy_options};

fn prime() -> Command {
    Command::cargo_bin("prime").unwrap()
}

fn write_dataset(dir: &Path, n: usize, seed0: u64) {
    let opts = toy_options();
    for i in 0..n {
        let s = synthetic_scenario(seed0 + i as u64, &opts);
        fs::write(dir.join(format!("scenario_{i:02}.json")), scenario_to_json(&s)).unwrap();
    }
}

fn one_scenario(dir: &Path) -> std::path::PathBuf {
    let s = synthetic_scenario(11, &toy_options());
    let p = dir.join("scenario.json");
    fs::write(&p, scenario_to_json(&s)).unwrap();
    p
}

/// A scenario whose only lane is a tight U-turn: every sampled candidate
/// violates the curvature bound, so the feasible set is empty.
fn impossible_scenario() -> Scenario {
    let radius = 2.5; // curvature 0.4 > kappa_max 0.33
    let n = 60;
    let centerline: Vec<Point> = (0..=n)
        .map(|i| {
            let a = std::f64::consts::PI * i as f64 / n as f64;
            Point::new(radius * a.sin(), radius * (1.0 - a.cos()))
        })
        .collect();
    let mut segments = BTreeMap::new();
    segments.insert(
        "uturn".to_string(),
        LaneSegment {
            id: "uturn".into(),
            centerline,
            predecessors: vec![],
            successors: vec![],
            speed_limit: None,
        },
    );
    let cfg = Config::default();
    let samples: Vec<TrackSample> = (0..cfg.track_len())
        .map(|i| TrackSample {
            position: Point::new(0.01 * i as f64, 0.0),
            observed: true,
        })
        .collect();
    let start = samples.last().unwrap().position;
    Scenario {
        lane_graph: LaneGraph {
            segments,
            static_obstacles: vec![],
        },
        tracks: vec![Track {
            agent_id: "target".into(),
            samples,
        }],
        target_index: 0,
        target_current_state: Some(AgentState {
            position: start,
            heading: 0.0,
            speed: 5.0,
            turn_rate: 0.0,
            actor_type: prime_core::scene::ActorType::Vehicle,
            timestamp: 0.0,
        }),
        ground_truth: None,
        config: cfg,
    }
}

#[test]
fn predict_writes_outputs_and_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let scenario = one_scenario(tmp.path());
    let out = tmp.path().join("out");
    prime()
        .args(["predict", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "1"])
        .assert()
        .success();
    let pred = fs::read_to_string(out.join("prediction.json")).unwrap();
    prime_core::scene::load_predictions(&out.join("prediction.json")).unwrap();
    assert!(pred.contains("probabilities"));
    let csv = fs::read_to_string(out.join("trajectories.csv")).unwrap();
    assert!(csv.starts_with("trajectory,probability,step,t,x,y,v,a,kappa,theta,s,d\n"));
    // 30 future steps per selected trajectory
    assert_eq!((csv.lines().count() - 1) % 30, 0);
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"subcommand\": \"predict\""));
    assert!(manifest.contains("\"nms_threshold\""));
}

#[test]
fn predict_k_flag_caps_modes() {
    let tmp = TempDir::new().unwrap();
    let scenario = one_scenario(tmp.path());
    let out = tmp.path().join("out");
    prime()
        .args(["predict", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .args(["--k", "2"])
        .assert()
        .success();
    let set = prime_core::scene::load_predictions(&out.join("prediction.json")).unwrap();
    assert!(set.len() <= 2);
}

#[test]
fn malformed_json_exits_one_with_diagnostic() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let out = tmp.path().join("out");
    prime()
        .args(["predict", "--scenario"])
        .arg(&bad)
        .arg("--out")
        .arg(&out)
        .assert()
        .code(1)
        .stderr(predicates::str::contains("parse error"));
}

#[test]
fn impossible_scenario_exits_two() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("uturn.json");
    fs::write(&path, scenario_to_json(&impossible_scenario())).unwrap();
    let out = tmp.path().join("out");
    prime()
        .args(["predict", "--scenario"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .assert()
        .code(2)
        .stderr(predicates::str::contains("no feasible trajectory"));
}

#[test]
fn train_reduces_loss_and_writes_params() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    write_dataset(&data, 3, 500);
    let out = tmp.path().join("out");
    prime()
        .args(["train", "--dataset"])
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .args(["--epochs", "50", "--lr", "0.01", "--seed", "3"])
        .assert()
        .success();
    prime_core::evaluator::ModelParams::from_json(
        &fs::read_to_string(out.join("params.json")).unwrap(),
    )
    .unwrap();
    let csv = fs::read_to_string(out.join("loss_history.csv")).unwrap();
    let losses: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(losses.len(), 51); // 50 pre-update rows + final loss
    assert!(losses.last().unwrap() < &losses[0]);
}

#[test]
fn train_zero_epochs_keeps_initialization() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    write_dataset(&data, 2, 600);
    let out = tmp.path().join("out");
    prime()
        .args(["train", "--dataset"])
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .args(["--epochs", "0", "--seed", "4", "--width", "8"])
        .assert()
        .success();
    let params = prime_core::evaluator::ModelParams::from_json(
        &fs::read_to_string(out.join("params.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(
        params.to_flat(),
        prime_core::evaluator::ModelParams::new(8, 4).to_flat()
    );
    let csv = fs::read_to_string(out.join("loss_history.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2); // header + single loss row
}

#[test]
fn train_without_ground_truth_exits_one() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    let mut s = synthetic_scenario(1, &toy_options());
    s.ground_truth = None;
    fs::write(data.join("nogt.json"), scenario_to_json(&s)).unwrap();
    let out = tmp.path().join("out");
    prime()
        .args(["train", "--dataset"])
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .assert()
        .code(1)
        .stderr(predicates::str::contains("ground_truth"));
}

#[test]
fn eval_and_audit_outputs() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    write_dataset(&data, 3, 700);
    let out = tmp.path().join("eval");
    prime()
        .args(["eval", "--dataset"])
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .assert()
        .success();
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["scenarios"], 3);
    assert_eq!(metrics["failures"], 0);
    assert!(metrics["aggregate"]["min_ade"].as_f64().unwrap() >= 0.0);

    let aout = tmp.path().join("audit");
    prime()
        .args(["audit", "--dataset"])
        .arg(&data)
        .arg("--out")
        .arg(&aout)
        .assert()
        .success();
    let csv = fs::read_to_string(aout.join("audit.csv")).unwrap();
    assert!(csv.starts_with("scenario,selected,infeasible,infeasibility\n"));
    assert_eq!(csv.lines().count(), 4);
    for line in csv.lines().skip(1) {
        assert!(line.ends_with(",0,0"), "selected trajectories must audit feasible: {line}");
    }
}

#[test]
fn sweep_emits_four_rows() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    write_dataset(&data, 2, 800);
    let out = tmp.path().join("out");
    prime()
        .args(["sweep", "--dataset"])
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "7"])
        .assert()
        .success();
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "drop_rate,miss_rate,min_ade,min_fde");
    assert_eq!(lines.len(), 5);
    let rates: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(rates, ["0", "0.2", "0.4", "0.6"]);
}

#[test]
fn acceptance_11_determinism() {
    let tmp = TempDir::new().unwrap();
    let scenario = one_scenario(tmp.path());
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    write_dataset(&data, 2, 900);
    let mut identical = true;
    let mut detail = Vec::new();
    for (cmd, files) in [
        ("predict", vec!["prediction.json", "trajectories.csv"]),
        ("eval", vec!["metrics.json"]),
    ] {
        let mut contents: Vec<Vec<Vec<u8>>> = Vec::new();
        for run in 0..2 {
            let out = tmp.path().join(format!("{cmd}_{run}"));
            let mut c = prime();
            if cmd == "predict" {
                c.args(["predict", "--scenario"]).arg(&scenario);
            } else {
                c.args(["eval", "--dataset"]).arg(&data);
            }
            c.arg("--out")
                .arg(&out)
                .args(["--seed", "42", "--drop-rate", "0.3"])
                .assert()
                .success();
            contents.push(files.iter().map(|f| fs::read(out.join(f)).unwrap()).collect());
        }
        let same = contents[0] == contents[1];
        identical &= same;
        detail.push(format!("{cmd}: {}", if same { "identical" } else { "DIFFER" }));
    }
    println!(
        "ACCEPTANCE 11 (determinism): {} {}",
        if identical { "PASS" } else { "FAIL" },
        detail.join(", ")
    );
    assert!(identical, "{}", detail.join(", "));
}
