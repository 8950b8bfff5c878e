// Fits the rate predictor and its derivation model for both link directions,
// writing every artifact of the chain into a scratch directory.

use remsim::measurement::Direction;
use remsim::pipeline::{self, ScenarioConfig};

fn main() {
    let config = ScenarioConfig::load(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/scenario.json"
    ))
    .unwrap();
    let out = std::env::temp_dir().join("remsim_train");

    let generated = pipeline::generate(&config, &out).unwrap();
    println!("campaign: {} samples", generated.samples);
    let rem = pipeline::build_rem(&config, &out, 50.0).unwrap();
    println!("map: {} populated cells", rem.populated_cells);

    for direction in [Direction::Uplink, Direction::Downlink] {
        let trained = pipeline::train(&config, &out, direction).unwrap();
        println!(
            "{}: {} samples, cv rmse {:.3} +- {:.3} MBit/s",
            direction, trained.samples, trained.cv_rmse_mean, trained.cv_rmse_std
        );

        let (forest, gpr) = pipeline::load_models(&out, direction).unwrap();
        let sample = pipeline::load_rem(&out)
            .unwrap()
            .lookup_with_fallback(remsim::geom::Point::new(4500.0, 0.0))
            .unwrap();
        let features = remsim::learners::FeatureVector::from_bundle(&sample, 13.0, 500_000);
        let predicted = forest.predict(&features);
        let (mean, std) = gpr.posterior(predicted);
        println!(
            "  near the mid station: predicted {:.2} MBit/s, derivation posterior {:.2} +- {:.2}",
            predicted, mean, std
        );
    }
    println!("artifacts in {}", out.display());
}
