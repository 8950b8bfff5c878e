// Scores a range of map cell widths against each other: coverage on the
// evaluation trip, per-layer lookup error, and cross-validated rate error.

use remsim::pipeline::{self, ScenarioConfig};

fn main() {
    let config = ScenarioConfig::load(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/scenario.json"
    ))
    .unwrap();
    let out = std::env::temp_dir().join("remsim_sweep");

    pipeline::generate(&config, &out).unwrap();
    let sweep = pipeline::run_sweep(&config, &out, &[5.0, 25.0, 50.0, 400.0]).unwrap();

    println!(
        "{:>6}  {:>5}  {:>5}  {:>5}  {:>12}  {:>12}",
        "width", "miss", "sinr", "cqi", "ul rate rmse", "dl rate rmse"
    );
    for c in &sweep.result.columns {
        println!(
            "{:>6}  {:>5.3}  {:>5.2}  {:>5.2}  {:>12.3}  {:>12.3}",
            c.cell_width, c.miss_ratio, c.sinr_rmse, c.cqi_rmse, c.rate_rmse_ul, c.rate_rmse_dl
        );
    }
    println!("full table in {}", sweep.path.display());
}
