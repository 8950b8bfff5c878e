// Replays every scheme once against the trained derivation model and once
// against the ground-truth field, reporting how far the learned chain drifts.

use remsim::pipeline::{self, ScenarioConfig};

fn main() {
    let config = ScenarioConfig::load(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/scenario.json"
    ))
    .unwrap();
    let out = std::env::temp_dir().join("remsim_evaluate");

    pipeline::generate(&config, &out).unwrap();
    pipeline::build_rem(&config, &out, 50.0).unwrap();
    pipeline::train(&config, &out, config.sim.direction).unwrap();

    let report = pipeline::evaluate(&config, &out).unwrap();
    println!("{} runs per scheme, seeds from {}", report.runs, report.base_seed);
    for s in &report.schemes {
        println!(
            "{:>10}: learned mean {:5.2}  reference mean {:5.2}  \
             relative error {:.3}  wasserstein {:.3}",
            s.scheme,
            s.simulated.mean,
            s.reference.mean,
            s.modeling_error.relative_mean,
            s.modeling_error.wasserstein
        );
    }
}
