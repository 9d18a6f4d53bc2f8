//! Trajectory-generation throughput over the 315-candidate three-lane
//! fixture: full grid sampling + feasibility filtering per reference path,
//! plus the end-to-end single-scenario pipeline.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use prime_core::evaluator::ModelParams;
use prime_core::frenet::project;
use prime_core::generator::generate;
use prime_core::harness::{predict_scenario, RunOptions};
use prime_core::scene::{load_scenario, ActorType, AgentState, Point, Scenario};

fn fixture() -> Scenario {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../prime-core/tests/fixtures/three_lane.json"
    ))
    .unwrap();
    load_scenario(&text).unwrap()
}

fn bench_generation(c: &mut Criterion) {
    let scenario = fixture();
    let cfg = &scenario.config;
    let params = ModelParams::new(16, 0);
    let out = predict_scenario(&scenario, &params, &RunOptions::default()).unwrap();
    let frames = out.frames;
    let last = scenario.target_track().last_position();
    let state = AgentState {
        position: Point::new(last.x, last.y),
        heading: 0.0,
        speed: 11.0,
        turn_rate: 0.0,
        actor_type: ActorType::Vehicle,
        timestamp: 0.0,
    };
    let starts: Vec<_> = frames
        .iter()
        .map(|f| project(f, &state, cfg.lane_width).unwrap())
        .collect();
    let candidates = cfg.n_lon_samples * cfg.n_lat_samples * frames.len();
    c.bench_function(
        &format!("generate_full_grid_{candidates}_candidates"),
        |b| {
            b.iter(|| {
                let set = generate(
                    black_box(&frames),
                    black_box(&starts),
                    &scenario.lane_graph,
                    cfg,
                )
                .unwrap();
                black_box(set.len())
            })
        },
    );
    c.bench_function("predict_scenario_end_to_end", |b| {
        b.iter(|| {
            black_box(
                predict_scenario(black_box(&scenario), &params, &RunOptions::default())
                    .unwrap()
                    .prediction
                    .len(),
            )
        })
    });
}

criterion_group!(benches, bench_generation);
criterion_main!(benches);
