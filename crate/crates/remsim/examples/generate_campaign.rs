// Drives the bundled scenario's measurement trips and writes the campaign CSV.

use remsim::pipeline::ScenarioConfig;
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

    let out = std::env::temp_dir().join("remsim_campaign.csv");
    scenario::save_campaign(&samples, &out).unwrap();
    println!("{} samples -> {}", samples.len(), out.display());

    for s in samples.iter().step_by(samples.len() / 5) {
        println!(
            "t={:7.1}s  pos=({:6.1},{:5.1})  rsrp={:6.1} dBm  sinr={:5.1} dB  cqi={:2.0}  \
             cell={}  {} {:.2} MBit/s",
            s.timestamp,
            s.position.x,
            s.position.y,
            s.rsrp,
            s.sinr,
            s.cqi,
            s.cell_id,
            s.direction,
            s.data_rate
        );
    }
}
