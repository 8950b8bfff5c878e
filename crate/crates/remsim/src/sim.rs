//! The transmission-scheme simulation loop.
//!
//! A vehicle drives a routed trip while a sensor fills a local buffer at a
//! fixed rate. On a whole-second probe grid the active scheme decides
//! whether to flush the whole buffer: periodically, channel-aware from the
//! looked-up SINR, or prediction-aware from the forest's rate estimate. Each
//! flush asks a rate source for the achieved end-to-end rate; in production
//! that source is the trained derivation model, for validation it is the
//! synthetic ground-truth field.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{summarize, Summary};
use crate::geom::Point;
use crate::learners::{FeatureVector, ForestModel, GprModel};
use crate::measurement::Direction;
use crate::mobility::{self, MobilityError, RoadNetwork, VehicleState};
use crate::rem::{Rem, RemError};
use crate::scenario::{
    SyntheticField, DOWNLINK_CAP_MBITS, MIN_RATE_MBITS, UPLINK_CAP_MBITS,
};

/// Sensor data generated per second, bytes.
pub const DEFAULT_GENERATION_RATE: u64 = 50_000;
/// Buffer age that forces a flush regardless of the scheme, seconds.
pub const DEFAULT_BUFFER_AGE_MAX: f64 = 120.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scheme: {0}")]
    BadScheme(String),
    #[error("invalid scenario: {0}")]
    BadScenario(String),
    #[error("cannot write results: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Rem(#[from] RemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Periodic,
    Cat,
    MlCat,
}

/// A transmission scheme and its knobs. The opportunistic schemes map their
/// metric (SINR for CAT, predicted rate for ML-CAT) through a normalized
/// power law to a per-probe transmission probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// Firing interval of the periodic scheme, seconds.
    pub interval: f64,
    /// Decision grid, whole seconds.
    pub probe_interval: f64,
    pub metric_min: f64,
    pub metric_max: f64,
    pub alpha: f64,
}

impl SchemeConfig {
    pub fn periodic(interval: f64) -> SchemeConfig {
        SchemeConfig {
            kind: SchemeKind::Periodic,
            interval,
            probe_interval: 1.0,
            metric_min: 0.0,
            metric_max: 1.0,
            alpha: 1.0,
        }
    }

    /// Channel-aware transmission on the measured SINR, 0 to 30 dB.
    pub fn cat() -> SchemeConfig {
        SchemeConfig {
            kind: SchemeKind::Cat,
            interval: 10.0,
            probe_interval: 1.0,
            metric_min: 0.0,
            metric_max: 30.0,
            alpha: 1.0,
        }
    }

    /// Prediction-aware transmission on the forecast rate, 0 up to the
    /// direction's peak rate.
    pub fn mlcat(direction: Direction) -> SchemeConfig {
        let cap = match direction {
            Direction::Uplink => UPLINK_CAP_MBITS,
            Direction::Downlink => DOWNLINK_CAP_MBITS,
        };
        SchemeConfig {
            kind: SchemeKind::MlCat,
            interval: 10.0,
            probe_interval: 1.0,
            metric_min: 0.0,
            metric_max: cap,
            alpha: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.interval > 0.0 && self.interval.is_finite()) {
            return Err(SimError::BadScheme(format!("interval {} must be > 0", self.interval)));
        }
        if !(self.probe_interval >= 1.0)
            || self.probe_interval.fract() != 0.0
            || !self.probe_interval.is_finite()
        {
            return Err(SimError::BadScheme(format!(
                "probe interval {} must be a whole number of seconds",
                self.probe_interval
            )));
        }
        if !(self.metric_min < self.metric_max)
            || !self.metric_min.is_finite()
            || !self.metric_max.is_finite()
        {
            return Err(SimError::BadScheme(format!(
                "metric range [{}, {}] must be ordered and finite",
                self.metric_min, self.metric_max
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(SimError::BadScheme(format!("alpha {} must be > 0", self.alpha)));
        }
        Ok(())
    }
}

/// Normalized-clamp power law: 0 at the metric floor, 1 at the cap.
pub fn transmission_probability(metric: f64, cfg: &SchemeConfig) -> f64 {
    ((metric - cfg.metric_min) / (cfg.metric_max - cfg.metric_min))
        .clamp(0.0, 1.0)
        .powf(cfg.alpha)
}

/// Mutable per-run scheme bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct SchemeState {
    t_last: f64,
}

impl SchemeState {
    pub fn new() -> SchemeState {
        SchemeState::default()
    }

    /// The scheme's transmission decision at probe time `t`. `metric` is the
    /// current SINR for CAT and the predicted rate for ML-CAT; the periodic
    /// scheme ignores it. The opportunistic schemes consume one Bernoulli
    /// draw per call.
    pub fn decide(
        &mut self,
        cfg: &SchemeConfig,
        t: f64,
        metric: f64,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        let fire = match cfg.kind {
            SchemeKind::Periodic => t - self.t_last >= cfg.interval - 1e-9,
            SchemeKind::Cat | SchemeKind::MlCat => {
                rng.gen_bool(transmission_probability(metric, cfg))
            }
        };
        if fire {
            self.t_last = t;
        }
        fire
    }
}

/// One whole-buffer transmission and everything known about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionRecord {
    pub t_start: f64,
    /// Flushed buffer size, bytes.
    pub payload: u64,
    /// The looked-up features the prediction was made from.
    pub features: FeatureVector,
    /// Forecast rate, MBit/s.
    pub predicted_rate: f64,
    /// Sampled end-to-end rate, MBit/s.
    pub achieved_rate: f64,
    /// Transfer time at the achieved rate, seconds.
    pub duration: f64,
    /// Whether the map cell was unpopulated and a neighbor answered.
    pub rem_miss: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub records: Vec<TransmissionRecord>,
    /// Bytes still buffered when the run ended.
    pub residual_buffer: u64,
    /// Simulated seconds.
    pub simulated_time: f64,
    pub seed: u64,
}

/// A single vehicle trip under one sensor configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub trip: (u32, u32),
    /// Simulated seconds; the vehicle parks at the destination if the trip
    /// ends first. `None` runs until arrival.
    pub duration: Option<f64>,
    /// Sensor output, bytes per second.
    pub generation_rate: u64,
    pub direction: Direction,
    /// Oldest buffered byte's age that forces a flush, seconds.
    pub buffer_age_max: f64,
}

impl SimScenario {
    pub fn new(from: u32, to: u32) -> SimScenario {
        SimScenario {
            trip: (from, to),
            duration: None,
            generation_rate: DEFAULT_GENERATION_RATE,
            direction: Direction::Uplink,
            buffer_age_max: DEFAULT_BUFFER_AGE_MAX,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if let Some(d) = self.duration {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(SimError::BadScenario(format!("duration {d} must be >= 0")));
            }
        }
        if self.generation_rate == 0 {
            return Err(SimError::BadScenario("generation rate must be > 0".into()));
        }
        if !(self.buffer_age_max > 0.0 && self.buffer_age_max.is_finite()) {
            return Err(SimError::BadScenario(format!(
                "buffer age limit {} must be > 0",
                self.buffer_age_max
            )));
        }
        Ok(())
    }
}

/// Everything a rate source may condition on.
#[derive(Debug, Clone, Copy)]
pub struct TransmissionContext {
    pub predicted_rate: f64,
    /// True vehicle position, not the map cell.
    pub position: Point,
    pub velocity: f64,
    pub payload: u64,
    pub direction: Direction,
}

/// Where achieved rates come from. Implementations must consume exactly one
/// normal draw per call so that swapping sources preserves the rng stream.
pub trait RateSource: Sync {
    fn sample_rate(&self, ctx: &TransmissionContext, rng: &mut ChaCha8Rng) -> f64;
}

impl RateSource for GprModel {
    fn sample_rate(&self, ctx: &TransmissionContext, rng: &mut ChaCha8Rng) -> f64 {
        self.sample(ctx.predicted_rate, rng)
    }
}

/// Samples achieved rates from the synthetic field at the true position,
/// with the same noise the measurement campaign applies. Running the
/// simulation once against the trained models and once against this source
/// isolates the modeling error of the learned chain.
#[derive(Debug, Clone)]
pub struct OracleRateSource {
    pub field: SyntheticField,
    pub rate_noise_rel: f64,
    pub rate_noise_abs: f64,
}

impl RateSource for OracleRateSource {
    fn sample_rate(&self, ctx: &TransmissionContext, rng: &mut ChaCha8Rng) -> f64 {
        let truth = self.field.ground_truth(ctx.position);
        let expected =
            self.field.expected_rate(truth.sinr, ctx.payload, ctx.velocity, ctx.direction);
        let z: f64 = rng.sample(StandardNormal);
        (expected + z * (self.rate_noise_rel * expected + self.rate_noise_abs))
            .max(MIN_RATE_MBITS)
    }
}

/// Runs one seeded trip with the trained derivation model as rate source.
pub fn run_simulation(
    network: &RoadNetwork,
    scenario: &SimScenario,
    scheme: &SchemeConfig,
    forest: &ForestModel,
    gpr: &GprModel,
    rem: &Rem,
    seed: u64,
) -> Result<SimulationResult, SimError> {
    run_simulation_with_source(network, scenario, scheme, forest, gpr, rem, seed)
}

pub fn run_simulation_with_source(
    network: &RoadNetwork,
    scenario: &SimScenario,
    scheme: &SchemeConfig,
    forest: &ForestModel,
    source: &dyn RateSource,
    rem: &Rem,
    seed: u64,
) -> Result<SimulationResult, SimError> {
    scheme.validate()?;
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = VehicleState::on_trip(network, scenario.trip.0, scenario.trip.1)?;
    let mut scheme_state = SchemeState::new();
    let probe_every = scheme.probe_interval as u64;
    let ticks_per_second = (1.0 / mobility::DEFAULT_DT).round() as u64;

    let mut buffer: u64 = 0;
    let mut oldest: Option<f64> = None;
    let mut retry = false;
    let mut records = Vec::new();
    let mut second: u64 = 0;

    loop {
        match scenario.duration {
            Some(d) => {
                if (second + 1) as f64 > d + 1e-9 {
                    break;
                }
            }
            None => {
                if state.arrived() && second > 0 {
                    break;
                }
                if second > 100_000_000 {
                    return Err(SimError::BadScenario("trip never completes".into()));
                }
            }
        }
        for _ in 0..ticks_per_second {
            state = mobility::step(state, network, mobility::DEFAULT_DT)?;
        }
        second += 1;
        buffer += scenario.generation_rate;
        if oldest.is_none() {
            oldest = Some(second as f64);
        }
        if second % probe_every != 0 {
            continue;
        }

        let t = second as f64;
        let (bundle, miss) = match rem.lookup(state.position) {
            Some(b) => (b, false),
            None => (rem.lookup_with_fallback(state.position)?, true),
        };
        let features = FeatureVector::from_bundle(&bundle, state.velocity, buffer);
        let predicted = forest.predict(&features);
        let metric = match scheme.kind {
            SchemeKind::Periodic => 0.0,
            SchemeKind::Cat => bundle.sinr,
            SchemeKind::MlCat => predicted,
        };
        let fire = scheme_state.decide(scheme, t, metric, &mut rng);
        let forced = oldest.is_some_and(|o| t - o > scenario.buffer_age_max);
        if (fire || forced || retry) && buffer > 0 {
            let ctx = TransmissionContext {
                predicted_rate: predicted,
                position: state.position,
                velocity: state.velocity,
                payload: buffer,
                direction: scenario.direction,
            };
            let achieved = source.sample_rate(&ctx, &mut rng);
            if achieved > 0.0 {
                records.push(TransmissionRecord {
                    t_start: t,
                    payload: buffer,
                    features,
                    predicted_rate: predicted,
                    achieved_rate: achieved,
                    duration: buffer as f64 * 8.0 / (achieved.max(MIN_RATE_MBITS) * 1e6),
                    rem_miss: miss,
                });
                buffer = 0;
                oldest = None;
                retry = false;
            } else {
                // A dead channel sample: keep the buffer, try again at the
                // next probe.
                retry = true;
            }
        }
    }

    Ok(SimulationResult {
        records,
        residual_buffer: buffer,
        simulated_time: second as f64,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeComparison {
    pub label: String,
    pub config: SchemeConfig,
    /// All achieved rates pooled over the runs, MBit/s.
    pub achieved_rates: Vec<f64>,
    pub summary: Summary,
}

/// Runs every scheme over the same seed range and pools the achieved rates.
/// Runs execute in parallel; results are identical to sequential execution.
pub fn compare_schemes(
    network: &RoadNetwork,
    scenario: &SimScenario,
    schemes: &[(String, SchemeConfig)],
    forest: &ForestModel,
    gpr: &GprModel,
    rem: &Rem,
    n_runs: usize,
    base_seed: u64,
) -> Result<Vec<SchemeComparison>, SimError> {
    if n_runs == 0 {
        return Err(SimError::BadScenario("need at least one run".into()));
    }
    schemes
        .iter()
        .map(|(label, cfg)| {
            let runs = (0..n_runs)
                .into_par_iter()
                .map(|k| {
                    run_simulation(network, scenario, cfg, forest, gpr, rem, base_seed + k as u64)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let achieved_rates: Vec<f64> = runs
                .iter()
                .flat_map(|r| r.records.iter().map(|rec| rec.achieved_rate))
                .collect();
            let summary = summarize(&achieved_rates).map_err(|_| {
                SimError::BadScenario(format!("scheme {label} never transmitted"))
            })?;
            Ok(SchemeComparison {
                label: label.clone(),
                config: *cfg,
                achieved_rates,
                summary,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct RecordRow {
    t_start: f64,
    payload: u64,
    pred_rate: f64,
    achieved_rate: f64,
    duration: f64,
    miss: bool,
}

/// Writes per-transmission results as CSV.
pub fn write_records_csv(
    records: &[TransmissionRecord],
    w: impl Write,
) -> Result<(), SimError> {
    let mut writer = csv::Writer::from_writer(w);
    for r in records {
        writer.serialize(RecordRow {
            t_start: r.t_start,
            payload: r.payload,
            pred_rate: r.predicted_rate,
            achieved_rate: r.achieved_rate,
            duration: r.duration,
            miss: r.rem_miss,
        })?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}
