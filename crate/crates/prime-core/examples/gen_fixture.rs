use prime_core::synthetic::{synthetic_scenario, SyntheticOptions};

fn main() {
    let opts = SyntheticOptions {
        max_curvature: 0.0,
        max_heading: 0.0,
        ..SyntheticOptions::default()
    };
    let s = synthetic_scenario(2026, &opts);
    println!("{}", prime_core::scene::scenario_to_json(&s));
}
