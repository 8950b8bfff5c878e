//! Scenario input and output: coordinate projection, the seeded synthetic
//! radio field used as ground-truth oracle, measurement-campaign generation
//! and the campaign CSV format.
//!
//! The synthetic field replaces a real drive-test dataset. Every quantity it
//! produces is a pure function of position and seed, so campaigns are fully
//! reproducible and learned models can be judged against the known rate
//! oracle.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point;
use crate::measurement::{Direction, MeasurementSample};
use crate::mobility::{self, MobilityError, RoadNetwork, VehicleState};

/// Reference path loss at [`REFERENCE_DISTANCE_M`], dB.
pub const REFERENCE_LOSS_DB: f64 = 60.0;
/// Reference distance of the log-distance model, meters.
pub const REFERENCE_DISTANCE_M: f64 = 10.0;
/// Peak rate of an uplink transmission, MBit/s.
pub const UPLINK_CAP_MBITS: f64 = 15.0;
/// Peak rate of a downlink transmission, MBit/s.
pub const DOWNLINK_CAP_MBITS: f64 = 30.0;
/// Distance granularity of the timing-advance indicator, meters.
pub const TA_STEP_M: f64 = 78.12;
/// Smallest rate the oracle reports, MBit/s.
pub const MIN_RATE_MBITS: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot access campaign file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse campaign CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("campaign CSV line {line}: {reason}")]
    BadRow { line: u64, reason: String },
    #[error("campaign is empty")]
    EmptyCampaign,
    #[error("invalid scenario: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
}

/// Equirectangular local frame anchored at a centroid; good to well under
/// half a meter of round-trip error within 10 km of the anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub lat0: f64,
    pub lon0: f64,
}

impl LocalFrame {
    pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

    pub fn project(&self, lat: f64, lon: f64) -> Point {
        let k = Self::EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        Point::new(
            (lon - self.lon0) * k * self.lat0.to_radians().cos(),
            (lat - self.lat0) * k,
        )
    }

    pub fn unproject(&self, p: Point) -> (f64, f64) {
        let k = Self::EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        (p.y / k + self.lat0, p.x / (k * self.lat0.to_radians().cos()) + self.lon0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: u32,
    pub position: Point,
    pub tx_power_dbm: f64,
}

/// Synthetic radio environment: log-distance path loss per station plus a
/// spatially correlated shadowing field, evaluated lazily from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticField {
    pub stations: Vec<BaseStation>,
    pub path_loss_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub correlation_length_m: f64,
    pub noise_floor_dbm: f64,
    pub seed: u64,
}

/// Noise-free channel state at one position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub serving_cell: u32,
    pub serving_distance: f64,
    pub rsrp: f64,
    pub rsrq: f64,
    pub sinr: f64,
    pub cqi: f64,
    pub ta: f64,
}

impl SyntheticField {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.stations.is_empty() {
            return Err(ScenarioError::BadConfig("no base stations".into()));
        }
        if !(self.correlation_length_m > 0.0) {
            return Err(ScenarioError::BadConfig(format!(
                "correlation length must be > 0, got {}",
                self.correlation_length_m
            )));
        }
        if !(self.path_loss_exponent > 0.0) || self.shadowing_sigma_db < 0.0 {
            return Err(ScenarioError::BadConfig(
                "path loss exponent must be > 0 and shadowing sigma >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Received power from one station, including shadowing.
    pub fn rsrp_dbm(&self, station: &BaseStation, p: Point) -> f64 {
        let d = station.position.distance(&p).max(REFERENCE_DISTANCE_M);
        let path_loss = REFERENCE_LOSS_DB
            + 10.0 * self.path_loss_exponent * (d / REFERENCE_DISTANCE_M).log10();
        station.tx_power_dbm - path_loss + self.shadow(station.id, p)
    }

    /// Correlated shadowing in dB: a seeded unit-variance Gaussian lattice
    /// at the correlation length, bilinearly interpolated and re-normalized
    /// so the point variance stays sigma^2 everywhere.
    pub fn shadow(&self, station_id: u32, p: Point) -> f64 {
        if self.shadowing_sigma_db == 0.0 {
            return 0.0;
        }
        let gx = p.x / self.correlation_length_m;
        let gy = p.y / self.correlation_length_m;
        let i0 = gx.floor();
        let j0 = gy.floor();
        let fx = gx - i0;
        let fy = gy - j0;
        let (i0, j0) = (i0 as i64, j0 as i64);
        let mut raw = 0.0;
        let mut norm_sq = 0.0;
        for (di, dj, w) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            raw += w * self.lattice_gauss(station_id, i0 + di, j0 + dj);
            norm_sq += w * w;
        }
        self.shadowing_sigma_db * raw / norm_sq.sqrt()
    }

    fn lattice_gauss(&self, station_id: u32, i: i64, j: i64) -> f64 {
        let mut h = self.seed ^ 0x9E37_79B9_7F4A_7C15;
        for v in [u64::from(station_id), i as u64, j as u64] {
            h ^= v.wrapping_mul(0xBF58_476D_1CE4_E5B9).rotate_left(31);
            h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
        }
        ChaCha8Rng::seed_from_u64(h).sample(StandardNormal)
    }

    /// Strongest server at a position; equal powers resolve to the smallest
    /// station id.
    pub fn serving(&self, p: Point) -> (&BaseStation, f64) {
        self.stations
            .iter()
            .map(|s| (s, self.rsrp_dbm(s, p)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.id.cmp(&a.0.id)))
            .expect("validated field has stations")
    }

    /// Signal to interference plus noise, dB, for the serving station.
    pub fn sinr_db(&self, p: Point) -> (f64, &BaseStation) {
        let (serving, serving_dbm) = self.serving(p);
        let lin = |dbm: f64| 10.0_f64.powf(dbm / 10.0);
        let interference: f64 = self
            .stations
            .iter()
            .filter(|s| s.id != serving.id)
            .map(|s| lin(self.rsrp_dbm(s, p)))
            .sum();
        let sinr = 10.0 * (lin(serving_dbm) / (lin(self.noise_floor_dbm) + interference)).log10();
        (sinr, serving)
    }

    /// The full noise-free channel state, with the documented monotone
    /// mappings from sinr to the quality indicators.
    pub fn ground_truth(&self, p: Point) -> GroundTruth {
        let (sinr, serving) = self.sinr_db(p);
        let d = serving.position.distance(&p);
        GroundTruth {
            serving_cell: serving.id,
            serving_distance: d,
            rsrp: self.rsrp_dbm(serving, p),
            rsrq: (-19.5 + 0.55 * (sinr + 10.0)).clamp(-19.5, -3.0),
            sinr,
            cqi: ((sinr + 6.5) / 2.3).round().clamp(0.0, 15.0),
            ta: (d / TA_STEP_M).floor(),
        }
    }

    /// Deterministic part of the rate oracle: direction cap scaled by
    /// spectral efficiency, payload ramp-up and a mild velocity penalty.
    pub fn expected_rate(
        &self,
        sinr_db: f64,
        payload_size: u64,
        velocity: f64,
        direction: Direction,
    ) -> f64 {
        let cap = match direction {
            Direction::Uplink => UPLINK_CAP_MBITS,
            Direction::Downlink => DOWNLINK_CAP_MBITS,
        };
        let se = ((1.0 + 10.0_f64.powf(sinr_db / 10.0)).log2() / 1001.0_f64.log2())
            .clamp(0.0, 1.0);
        let payload_factor = payload_size as f64 / (payload_size as f64 + 250_000.0);
        let velocity_factor = (1.0 - 0.004 * velocity).max(0.5);
        (cap * se * payload_factor * velocity_factor).max(MIN_RATE_MBITS)
    }
}

/// How a campaign is driven and observed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignParams {
    /// Measurement probes per second.
    pub sampling_rate_hz: f64,
    /// Gaussian noise on measured rsrp and sinr, dB.
    pub power_noise_db: f64,
    /// Gaussian noise on measured rsrq, dB.
    pub rsrq_noise_db: f64,
    /// Gaussian position jitter per axis, meters.
    pub gps_noise_m: f64,
    /// Relative std of the rate noise.
    pub rate_noise_rel: f64,
    /// Absolute floor of the rate noise std, MBit/s.
    pub rate_noise_abs: f64,
    /// Payload draw bounds, bytes (log-uniform).
    pub payload_min: u64,
    pub payload_max: u64,
}

impl Default for CampaignParams {
    fn default() -> Self {
        CampaignParams {
            sampling_rate_hz: 1.0,
            power_noise_db: 2.0,
            rsrq_noise_db: 1.0,
            gps_noise_m: 2.0,
            rate_noise_rel: 0.15,
            rate_noise_abs: 0.1,
            payload_min: 50_000,
            payload_max: 4_000_000,
        }
    }
}

/// Drives every trip through the road network and emits noisy measurement
/// samples of the synthetic field on a fixed probe grid. The achieved data
/// rate is the oracle rate at the true position plus seeded noise, so the
/// irreducible error of any learned model is the noise itself.
pub fn generate_campaign(
    field: &SyntheticField,
    network: &RoadNetwork,
    trips: &[(u32, u32)],
    params: &CampaignParams,
    seed: u64,
) -> Result<Vec<MeasurementSample>, ScenarioError> {
    field.validate()?;
    if !(params.sampling_rate_hz > 0.0) {
        return Err(ScenarioError::BadConfig("sampling rate must be > 0".into()));
    }
    let probe_ticks =
        (1.0 / (params.sampling_rate_hz * mobility::DEFAULT_DT)).round().max(1.0) as u64;
    if params.payload_min == 0 || params.payload_min > params.payload_max {
        return Err(ScenarioError::BadConfig("bad payload bounds".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    let mut t_base = 0.0;
    for (from, to) in trips {
        let mut state = VehicleState::on_trip(network, *from, *to)?;
        let mut tick: u64 = 0;
        loop {
            if tick % probe_ticks == 0 {
                let t = t_base + tick as f64 * mobility::DEFAULT_DT;
                samples.push(observe(field, params, &state, t, &mut rng));
            }
            if state.arrived() && tick > 0 {
                break;
            }
            state = mobility::step(state, network, mobility::DEFAULT_DT)?;
            tick += 1;
            if tick > 10_000_000 {
                return Err(ScenarioError::BadConfig(format!(
                    "trip {from} -> {to} never completes"
                )));
            }
        }
        // Trips are staggered in time by a short parking gap.
        t_base += tick as f64 * mobility::DEFAULT_DT + 10.0;
    }
    Ok(samples)
}

fn observe(
    field: &SyntheticField,
    params: &CampaignParams,
    state: &VehicleState,
    t: f64,
    rng: &mut ChaCha8Rng,
) -> MeasurementSample {
    let truth = field.ground_truth(state.position);

    let (lo, hi) = ((params.payload_min as f64).ln(), (params.payload_max as f64).ln());
    let payload_size = rng.gen_range(lo..=hi).exp().round() as u64;
    let direction = if rng.gen_bool(0.5) { Direction::Uplink } else { Direction::Downlink };

    let gauss = |rng: &mut ChaCha8Rng, sigma: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        sigma * z
    };
    let expected =
        field.expected_rate(truth.sinr, payload_size, state.velocity, direction);
    let rate_noise = gauss(rng, params.rate_noise_rel * expected + params.rate_noise_abs);

    MeasurementSample {
        position: Point::new(
            state.position.x + gauss(rng, params.gps_noise_m),
            state.position.y + gauss(rng, params.gps_noise_m),
        ),
        timestamp: t,
        rsrp: truth.rsrp + gauss(rng, params.power_noise_db),
        rsrq: truth.rsrq + gauss(rng, params.rsrq_noise_db),
        sinr: truth.sinr + gauss(rng, params.power_noise_db),
        cqi: truth.cqi,
        ta: truth.ta,
        velocity: state.velocity,
        cell_id: truth.serving_cell,
        payload_size,
        data_rate: (expected + rate_noise).max(MIN_RATE_MBITS),
        direction,
    }
}

// CSV row with the fixed public column set; field order is the column order.
#[derive(Serialize, Deserialize)]
struct CsvRow {
    x: f64,
    y: f64,
    t: f64,
    rsrp: f64,
    rsrq: f64,
    sinr: f64,
    cqi: f64,
    ta: f64,
    velocity: f64,
    cell_id: u32,
    payload: u64,
    data_rate: f64,
    direction: Direction,
}

impl From<&MeasurementSample> for CsvRow {
    fn from(s: &MeasurementSample) -> Self {
        CsvRow {
            x: s.position.x,
            y: s.position.y,
            t: s.timestamp,
            rsrp: s.rsrp,
            rsrq: s.rsrq,
            sinr: s.sinr,
            cqi: s.cqi,
            ta: s.ta,
            velocity: s.velocity,
            cell_id: s.cell_id,
            payload: s.payload_size,
            data_rate: s.data_rate,
            direction: s.direction,
        }
    }
}

impl From<CsvRow> for MeasurementSample {
    fn from(r: CsvRow) -> Self {
        MeasurementSample {
            position: Point::new(r.x, r.y),
            timestamp: r.t,
            rsrp: r.rsrp,
            rsrq: r.rsrq,
            sinr: r.sinr,
            cqi: r.cqi,
            ta: r.ta,
            velocity: r.velocity,
            cell_id: r.cell_id,
            payload_size: r.payload,
            data_rate: r.data_rate,
            direction: r.direction,
        }
    }
}

pub fn save_campaign_to(samples: &[MeasurementSample], w: impl Write) -> Result<(), ScenarioError> {
    let mut writer = csv::Writer::from_writer(w);
    for s in samples {
        writer.serialize(CsvRow::from(s))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_campaign(
    samples: &[MeasurementSample],
    path: impl AsRef<Path>,
) -> Result<(), ScenarioError> {
    save_campaign_to(samples, std::fs::File::create(path)?)
}

/// Reads a campaign CSV. Lines starting with `#` are ignored; every data
/// row must validate, and failures name the offending line.
pub fn load_campaign_from(r: impl Read) -> Result<Vec<MeasurementSample>, ScenarioError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut samples = Vec::new();
    let mut raw = csv::StringRecord::new();
    let header = reader.headers()?.clone();
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut raw) {
            Ok(false) => break,
            Ok(true) => {
                let row: CsvRow = raw
                    .deserialize(Some(&header))
                    .map_err(|e| ScenarioError::BadRow { line, reason: e.to_string() })?;
                let sample = MeasurementSample::from(row);
                sample
                    .validate()
                    .map_err(|reason| ScenarioError::BadRow { line, reason })?;
                samples.push(sample);
            }
            Err(e) => return Err(ScenarioError::BadRow { line, reason: e.to_string() }),
        }
    }
    if samples.is_empty() {
        return Err(ScenarioError::EmptyCampaign);
    }
    Ok(samples)
}

pub fn load_campaign(path: impl AsRef<Path>) -> Result<Vec<MeasurementSample>, ScenarioError> {
    load_campaign_from(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::rmse;
    use crate::learners::{FeatureVector, ForestModel, ForestParams};
    use crate::mobility::Edge;
    use approx::assert_relative_eq;

    fn single_station(sigma: f64) -> SyntheticField {
        SyntheticField {
            stations: vec![BaseStation {
                id: 1,
                position: Point::new(0.0, 0.0),
                tx_power_dbm: 43.0,
            }],
            path_loss_exponent: 3.2,
            shadowing_sigma_db: sigma,
            correlation_length_m: 60.0,
            noise_floor_dbm: -104.0,
            seed: 7,
        }
    }

    fn corridor(length_m: f64, spacing: f64) -> RoadNetwork {
        let n = (length_m / spacing) as u32;
        let nodes = (0..=n).map(|k| (k, Point::new(k as f64 * spacing, 0.0)));
        let edges = (0..n).map(|k| Edge {
            id: k + 1,
            from: k,
            to: k + 1,
            length: spacing,
            speed_limit: 13.89,
            bidir: true,
        });
        RoadNetwork::new(nodes, edges).unwrap()
    }

    fn three_station_field() -> SyntheticField {
        SyntheticField {
            stations: vec![
                BaseStation { id: 1, position: Point::new(200.0, 300.0), tx_power_dbm: 43.0 },
                BaseStation { id: 2, position: Point::new(1500.0, -250.0), tx_power_dbm: 43.0 },
                BaseStation { id: 3, position: Point::new(2800.0, 350.0), tx_power_dbm: 43.0 },
            ],
            ..single_station(4.0)
        }
    }

    #[test]
    fn frame_centroid_maps_to_origin() {
        let frame = LocalFrame { lat0: 51.5, lon0: 7.4 };
        let p = frame.project(51.5, 7.4);
        assert_relative_eq!(p.x, 0.0);
        assert_relative_eq!(p.y, 0.0);
    }

    #[test]
    fn frame_round_trips_within_half_a_meter() {
        let frame = LocalFrame { lat0: 51.5, lon0: 7.4 };
        for (dlat, dlon) in [(0.05, 0.08), (-0.08, 0.02), (0.0, -0.1)] {
            let (lat, lon) = (51.5 + dlat, 7.4 + dlon);
            let p = frame.project(lat, lon);
            assert!(p.distance(&Point::ORIGIN) < 10_000.0);
            let (lat2, lon2) = frame.unproject(p);
            let q = frame.project(lat2, lon2);
            assert!(p.distance(&q) < 0.5);
        }
    }

    #[test]
    fn one_degree_longitude_at_the_equator() {
        let frame = LocalFrame { lat0: 0.0, lon0: 0.0 };
        let p = frame.project(0.0, 1.0);
        assert_relative_eq!(p.x, 111_319.490793, epsilon = 1e-3);
    }

    #[test]
    fn field_is_a_pure_function_of_position_and_seed() {
        let field = single_station(4.0);
        let p = Point::new(123.4, -56.7);
        assert_eq!(
            field.rsrp_dbm(&field.stations[0], p).to_bits(),
            field.rsrp_dbm(&field.stations[0], p).to_bits()
        );
        let other = SyntheticField { seed: 8, ..field.clone() };
        assert_ne!(
            field.rsrp_dbm(&field.stations[0], p),
            other.rsrp_dbm(&other.stations[0], p)
        );
    }

    #[test]
    fn shadowing_statistics_and_correlation() {
        let field = single_station(4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let points: Vec<Point> = (0..4000)
            .map(|_| Point::new(rng.gen_range(-3000.0..3000.0), rng.gen_range(-3000.0..3000.0)))
            .collect();
        let values: Vec<f64> = points.iter().map(|p| field.shadow(1, *p)).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / values.len() as f64)
            .sqrt();
        assert!(mean.abs() < 0.3, "shadowing mean {mean} should be near 0");
        assert!((std - 4.0).abs() < 0.4, "shadowing std {std} should be near sigma");

        let corr = |offset: f64| {
            let pairs: Vec<(f64, f64)> = points
                .iter()
                .map(|p| (field.shadow(1, *p), field.shadow(1, Point::new(p.x + offset, p.y))))
                .collect();
            let (ma, mb) = (
                pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64,
                pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64,
            );
            let cov = pairs.iter().map(|(a, b)| (a - ma) * (b - mb)).sum::<f64>();
            let (va, vb) = (
                pairs.iter().map(|(a, _)| (a - ma) * (a - ma)).sum::<f64>(),
                pairs.iter().map(|(_, b)| (b - mb) * (b - mb)).sum::<f64>(),
            );
            cov / (va * vb).sqrt()
        };
        assert!(corr(6.0) > 0.8, "nearby points must stay correlated");
        assert!(corr(300.0).abs() < 0.15, "distant points must decorrelate");
    }

    #[test]
    fn pure_path_loss_decreases_monotonically() {
        let field = single_station(0.0);
        let mut last_rsrp = f64::INFINITY;
        let mut last_sinr = f64::INFINITY;
        for k in 1..200 {
            let p = Point::new(k as f64 * 25.0, 0.0);
            let rsrp = field.rsrp_dbm(&field.stations[0], p);
            let (sinr, _) = field.sinr_db(p);
            assert!(rsrp < last_rsrp);
            assert!(sinr <= last_sinr);
            last_rsrp = rsrp;
            last_sinr = sinr;
        }
    }

    #[test]
    fn indicator_mappings_hit_documented_anchors() {
        let field = single_station(0.0);
        let close = field.ground_truth(Point::new(5.0, 0.0));
        assert_eq!(close.serving_cell, 1);
        assert_eq!(close.ta, 0.0);
        assert_relative_eq!(close.rsrq, -3.0);
        assert_eq!(close.cqi, 15.0);

        let far = field.ground_truth(Point::new(6000.0, 0.0));
        assert!(far.sinr < 0.0);
        assert!(far.cqi <= 2.0);
        assert_eq!(far.ta, (6000.0 / TA_STEP_M).floor());
        assert!(far.rsrq >= -19.5 && far.rsrq <= -3.0);
    }

    #[test]
    fn rate_oracle_is_monotone_and_direction_scaled() {
        let field = single_station(0.0);
        let r_low = field.expected_rate(0.0, 1_000_000, 10.0, Direction::Downlink);
        let r_high = field.expected_rate(20.0, 1_000_000, 10.0, Direction::Downlink);
        assert!(r_high > r_low);
        let r_small = field.expected_rate(20.0, 60_000, 10.0, Direction::Downlink);
        assert!(r_small < r_high);
        let r_ul = field.expected_rate(20.0, 1_000_000, 10.0, Direction::Uplink);
        assert_relative_eq!(r_high / r_ul, 2.0, epsilon = 1e-12);
        let r_fast = field.expected_rate(20.0, 1_000_000, 30.0, Direction::Downlink);
        assert!(r_fast < r_high);
    }

    #[test]
    fn campaigns_are_seed_deterministic() {
        let field = three_station_field();
        let network = corridor(3000.0, 500.0);
        let trips = [(0, 6), (6, 0)];
        let a = generate_campaign(&field, &network, &trips, &CampaignParams::default(), 5)
            .unwrap();
        let b = generate_campaign(&field, &network, &trips, &CampaignParams::default(), 5)
            .unwrap();
        assert_eq!(a, b);
        let c = generate_campaign(&field, &network, &trips, &CampaignParams::default(), 6)
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn campaign_samples_are_valid_and_time_ordered() {
        let field = three_station_field();
        let network = corridor(3000.0, 500.0);
        let samples =
            generate_campaign(&field, &network, &[(0, 6)], &CampaignParams::default(), 1)
                .unwrap();
        // 3000 m at up to 13.89 m/s is roughly four minutes at 1 Hz.
        assert!(samples.len() > 200 && samples.len() < 300, "got {}", samples.len());
        for s in &samples {
            s.validate().unwrap();
        }
        for w in samples.windows(2) {
            assert!(w[1].timestamp > w[0].timestamp);
        }
    }

    #[test]
    fn forest_beats_constant_predictor_by_a_fifth() {
        let field = three_station_field();
        let network = corridor(3000.0, 500.0);
        let trips: Vec<(u32, u32)> = (0..4).flat_map(|_| [(0, 6), (6, 0)]).collect();
        let samples =
            generate_campaign(&field, &network, &trips, &CampaignParams::default(), 2).unwrap();

        let split = samples.len() * 4 / 5;
        let (train, held) = samples.split_at(split);
        let dataset: Vec<(FeatureVector, f64)> =
            train.iter().map(|s| (FeatureVector::from_sample(s), s.data_rate)).collect();
        let model = ForestModel::train(&dataset, ForestParams::default(), 3).unwrap();

        let observed: Vec<f64> = held.iter().map(|s| s.data_rate).collect();
        let predicted: Vec<f64> =
            held.iter().map(|s| model.predict(&FeatureVector::from_sample(s))).collect();
        let mean = dataset.iter().map(|(_, y)| y).sum::<f64>() / dataset.len() as f64;
        let constant = vec![mean; observed.len()];

        let forest_rmse = rmse(&predicted, &observed).unwrap();
        let constant_rmse = rmse(&constant, &observed).unwrap();
        assert!(
            forest_rmse <= 0.8 * constant_rmse,
            "forest {forest_rmse:.3} vs constant {constant_rmse:.3}"
        );
    }

    #[test]
    fn csv_round_trips_exactly() {
        let field = three_station_field();
        let network = corridor(2000.0, 500.0);
        let samples =
            generate_campaign(&field, &network, &[(0, 4)], &CampaignParams::default(), 9)
                .unwrap();
        let mut buf = Vec::new();
        save_campaign_to(&samples, &mut buf).unwrap();
        let restored = load_campaign_from(buf.as_slice()).unwrap();
        assert_eq!(samples, restored);
    }

    #[test]
    fn hand_written_rows_parse_to_known_values() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/mini_campaign.csv");
        let samples = load_campaign(path).unwrap();
        assert_eq!(samples.len(), 3);
        assert_relative_eq!(samples[0].position.x, 12.5);
        assert_relative_eq!(samples[0].rsrp, -81.25);
        assert_eq!(samples[1].cell_id, 2);
        assert_eq!(samples[1].direction, Direction::Uplink);
        assert_relative_eq!(samples[2].data_rate, 21.0);
        assert_eq!(samples[2].payload_size, 4_000_000);
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let csv = "x,y,t,rsrp,rsrq,sinr,cqi,ta,velocity,cell_id,payload,data_rate,direction\n\
                   1.0,2.0,0.0,-80,-10,5,8,3,10,1,1000,5.0,dl\n\
                   1.0,2.0,1.0,-80,-10,5,99,3,10,1,1000,5.0,dl\n";
        let err = load_campaign_from(csv.as_bytes()).unwrap_err();
        match err {
            ScenarioError::BadRow { line, reason } => {
                assert_eq!(line, 3);
                assert!(reason.contains("cqi"), "reason was: {reason}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_campaign_is_an_error() {
        let header_only = "x,y,t,rsrp,rsrq,sinr,cqi,ta,velocity,cell_id,payload,data_rate,direction\n";
        assert!(matches!(
            load_campaign_from(header_only.as_bytes()),
            Err(ScenarioError::EmptyCampaign)
        ));
    }
}
