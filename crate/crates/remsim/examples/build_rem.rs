// Aggregates a campaign into a radio environmental map and probes its quality.

use remsim::pipeline::{probe_positions, ScenarioConfig};
use remsim::rem::{NetworkFeature, Rem};
use remsim::scenario;

fn main() {
    let config = ScenarioConfig::load(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/scenario.json"
    ))
    .unwrap();
    let network = config.load_network().unwrap();
    let samples = scenario::generate_campaign(
        &config.field,
        &network,
        &config.trips,
        &config.campaign,
        config.seed,
    )
    .unwrap();

    let rem = Rem::build(&samples, 50.0).unwrap();
    println!(
        "{} populated cells at {} m ({} samples rejected)",
        rem.populated_cells(),
        rem.cell_width(),
        rem.rejected_samples()
    );

    let probes = probe_positions(&network, config.sim.trip).unwrap();
    println!("miss ratio on the evaluation trip: {:.3}", rem.miss_ratio(&probes).unwrap());

    for feature in NetworkFeature::ALL {
        if !feature.is_numeric() {
            continue;
        }
        let (rmse, mae) = rem.layer_lookup_error(&samples, feature).unwrap();
        println!("{:>5} lookup error: rmse {:6.3}  mae {:6.3}", feature.name(), rmse, mae);
    }

    let mid = probes[probes.len() / 2];
    let bundle = rem.lookup(mid).unwrap();
    println!(
        "mid-trip cell ({:.0},{:.0}): rsrp {:.1} dBm, sinr {:.1} dB, cqi {:.1}, serving cell {}",
        mid.x, mid.y, bundle.rsrp, bundle.sinr, bundle.cqi, bundle.cell_id
    );
}
