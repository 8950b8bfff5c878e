// Runs every configured transmission scheme over a set of seeded trips and
// compares their pooled achieved rates.

use remsim::pipeline::{self, ScenarioConfig};

fn main() {
    let config = ScenarioConfig::load(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/scenario.json"
    ))
    .unwrap();
    let out = std::env::temp_dir().join("remsim_simulate");

    pipeline::generate(&config, &out).unwrap();
    pipeline::build_rem(&config, &out, 50.0).unwrap();
    pipeline::train(&config, &out, config.sim.direction).unwrap();

    println!("{:>10}  {:>5}  {:>6}  {:>6}  {:>6}", "scheme", "n", "mean", "median", "q3");
    for name in config.schemes.keys() {
        let sim = pipeline::simulate(&config, &out, name, 10, 1000).unwrap();
        let s = sim.summary.achieved_rate;
        println!(
            "{:>10}  {:>5}  {:>6.2}  {:>6.2}  {:>6.2}",
            name, s.n, s.mean, s.median, s.q3
        );
    }
}
