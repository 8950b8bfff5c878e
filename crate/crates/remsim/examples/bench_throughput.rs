// Wall-clocks one long simulated hour per scheme and reports the ratio of
// simulated time to wall time.

use remsim::pipeline::{self, ScenarioConfig};

fn main() {
    let config = ScenarioConfig::load(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/scenario.json"
    ))
    .unwrap();
    let out = std::env::temp_dir().join("remsim_bench");

    pipeline::generate(&config, &out).unwrap();
    pipeline::build_rem(&config, &out, 50.0).unwrap();
    pipeline::train(&config, &out, config.sim.direction).unwrap();

    let report = pipeline::bench(&config, &out).unwrap();
    for e in &report.entries {
        println!(
            "{:>10}: {:6.0} simulated s in {:.3} wall s ({:>9.0}x), {} transmissions",
            e.scheme, e.simulated_seconds, e.wall_seconds, e.speedup, e.transmissions
        );
    }
}
