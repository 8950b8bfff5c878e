//! The batch experiment pipeline behind the `remsim` binary and the
//! runnable examples.
//!
//! Every step reads one scenario config (JSON) plus earlier artifacts from
//! an output directory, and writes its own artifacts there under fixed
//! names. Artifacts embed the producing command, config and seed, JSON ones
//! as a wrapper object and CSV ones as `#` header lines, so a result file
//! always tells how to regenerate it. Writes go through a temp file and a
//! rename; a crashed run never leaves a half-written artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{self, MetricError, ModelingError, Summary};
use crate::geom::Point;
use crate::learners::{
    FeatureVector, ForestModel, ForestParams, GprModel, LearnError,
};
use crate::measurement::{Direction, MeasurementSample};
use crate::mobility::{self, MobilityError, RoadNetwork, VehicleState};
use crate::rem::{Rem, RemError};
use crate::scenario::{self, CampaignParams, ScenarioError, SyntheticField};
use crate::sim::{
    self, OracleRateSource, SchemeConfig, SimError, SimScenario, SimulationResult,
};
use crate::sweep::{self, SweepError, SweepResult};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Schema { path: PathBuf, detail: String },
    #[error("invalid pipeline input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Rem(#[from] RemError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// One experiment, end to end: the synthetic world, how the measurement
/// campaign drives through it, how models are trained, and the evaluation
/// trip the schemes compete on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Road network file, resolved relative to the config's directory.
    pub network: PathBuf,
    pub field: SyntheticField,
    /// Campaign trips as (from, to) node pairs.
    pub trips: Vec<(u32, u32)>,
    pub campaign: CampaignParams,
    /// The evaluation trip the schemes run on.
    pub sim: SimScenario,
    pub forest: ForestParams,
    pub schemes: BTreeMap<String, SchemeConfig>,
    /// Runs pooled per scheme by `evaluate`.
    pub eval_runs: usize,
    /// Simulated seconds per `bench` run.
    pub bench_duration: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Reads the config and resolves the network path against the config
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<ScenarioConfig, PipelineError> {
        let path = path.as_ref();
        let mut config: ScenarioConfig = read_json_file(path)?;
        if config.network.is_relative() {
            if let Some(dir) = path.parent() {
                config.network = dir.join(&config.network);
            }
        }
        config.validate().map_err(|detail| PipelineError::Schema {
            path: path.to_path_buf(),
            detail,
        })?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), String> {
        if self.trips.is_empty() {
            return Err("field `trips`: need at least one campaign trip".into());
        }
        if self.schemes.is_empty() {
            return Err("field `schemes`: need at least one scheme".into());
        }
        if self.eval_runs == 0 {
            return Err("field `eval_runs`: must be >= 1".into());
        }
        if !(self.bench_duration > 0.0) {
            return Err("field `bench_duration`: must be > 0".into());
        }
        self.field.validate().map_err(|e| format!("field `field`: {e}"))?;
        for (name, scheme) in &self.schemes {
            scheme.validate().map_err(|e| format!("field `schemes.{name}`: {e}"))?;
        }
        Ok(())
    }

    pub fn load_network(&self) -> Result<RoadNetwork, PipelineError> {
        RoadNetwork::load(&self.network).map_err(|e| match e {
            MobilityError::Io(source) => {
                PipelineError::File { path: self.network.clone(), source }
            }
            other => PipelineError::Schema {
                path: self.network.clone(),
                detail: other.to_string(),
            },
        })
    }

    pub fn scheme(&self, name: &str) -> Result<&SchemeConfig, PipelineError> {
        self.schemes.get(name).ok_or_else(|| {
            PipelineError::BadInput(format!(
                "unknown scheme {name:?}; config defines: {}",
                self.schemes.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }
}

/// What produced an artifact. Serialized into every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<f64>>,
    pub config: ScenarioConfig,
}

impl Provenance {
    fn new(command: &str, seed: u64, config: &ScenarioConfig) -> Provenance {
        Provenance {
            command: command.to_string(),
            seed,
            cell_width: None,
            direction: None,
            scheme: None,
            runs: None,
            widths: None,
            config: config.clone(),
        }
    }
}

/// JSON artifact wrapper: provenance next to the payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub provenance: Provenance,
    pub data: T,
}

// Fixed artifact names inside the output directory.
pub fn campaign_path(out: &Path) -> PathBuf {
    out.join("campaign.csv")
}
pub fn rem_path(out: &Path) -> PathBuf {
    out.join("rem.json")
}
pub fn forest_path(out: &Path, direction: Direction) -> PathBuf {
    out.join(format!("forest_{direction}.json"))
}
pub fn gpr_path(out: &Path, direction: Direction) -> PathBuf {
    out.join(format!("gpr_{direction}.json"))
}
pub fn results_path(out: &Path, scheme: &str, run: usize) -> PathBuf {
    out.join(format!("results_{scheme}_run{run}.csv"))
}
pub fn summary_path(out: &Path, scheme: &str) -> PathBuf {
    out.join(format!("summary_{scheme}.json"))
}
pub fn sweep_path(out: &Path) -> PathBuf {
    out.join("sweep.csv")
}
pub fn evaluation_path(out: &Path) -> PathBuf {
    out.join("evaluation.json")
}
pub fn bench_path(out: &Path) -> PathBuf {
    out.join("bench.json")
}

fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| PipelineError::File { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Schema {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|source| PipelineError::File { path: dir.to_path_buf(), source })?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)
        .map_err(|source| PipelineError::File { path: tmp.clone(), source })?;
    std::fs::rename(&tmp, path)
        .map_err(|source| PipelineError::File { path: path.to_path_buf(), source })?;
    Ok(())
}

fn write_json_artifact<T: Serialize>(
    path: &Path,
    provenance: Provenance,
    data: T,
) -> Result<(), PipelineError> {
    let artifact = Artifact { provenance, data };
    let mut text = serde_json::to_string_pretty(&artifact).expect("serializable artifact");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json_artifact<T: DeserializeOwned>(
    path: &Path,
) -> Result<Artifact<T>, PipelineError> {
    read_json_file(path)
}

fn provenance_comment(provenance: &Provenance) -> String {
    let line = serde_json::to_string(provenance).expect("serializable provenance");
    format!("# provenance: {line}\n")
}

pub struct GenerateOutcome {
    pub path: PathBuf,
    pub samples: usize,
}

/// `generate`: drive the campaign trips and write `campaign.csv`.
pub fn generate(config: &ScenarioConfig, out: &Path) -> Result<GenerateOutcome, PipelineError> {
    let network = config.load_network()?;
    let samples = scenario::generate_campaign(
        &config.field,
        &network,
        &config.trips,
        &config.campaign,
        config.seed,
    )?;
    let mut bytes = provenance_comment(&Provenance::new("generate", config.seed, config))
        .into_bytes();
    scenario::save_campaign_to(&samples, &mut bytes)?;
    let path = campaign_path(out);
    write_atomic(&path, &bytes)?;
    Ok(GenerateOutcome { path, samples: samples.len() })
}

fn load_campaign_artifact(out: &Path) -> Result<Vec<MeasurementSample>, PipelineError> {
    let path = campaign_path(out);
    scenario::load_campaign(&path).map_err(|e| match e {
        ScenarioError::Io(source) => PipelineError::File { path, source },
        other => PipelineError::Schema { path, detail: other.to_string() },
    })
}

pub struct BuildRemOutcome {
    pub path: PathBuf,
    pub populated_cells: usize,
    pub rejected_samples: usize,
}

/// `build-rem`: aggregate the campaign into a map and write `rem.json`.
pub fn build_rem(
    config: &ScenarioConfig,
    out: &Path,
    cell_width: f64,
) -> Result<BuildRemOutcome, PipelineError> {
    let samples = load_campaign_artifact(out)?;
    let rem = Rem::build(&samples, cell_width)?;
    let outcome = BuildRemOutcome {
        path: rem_path(out),
        populated_cells: rem.populated_cells(),
        rejected_samples: rem.rejected_samples(),
    };
    let mut provenance = Provenance::new("build-rem", config.seed, config);
    provenance.cell_width = Some(cell_width);
    write_json_artifact(&outcome.path, provenance, rem)?;
    Ok(outcome)
}

pub fn load_rem(out: &Path) -> Result<Rem, PipelineError> {
    Ok(read_json_artifact::<Rem>(&rem_path(out))?.data)
}

pub struct TrainOutcome {
    pub forest_path: PathBuf,
    pub gpr_path: PathBuf,
    pub direction: Direction,
    pub samples: usize,
    pub cv_rmse_mean: f64,
    pub cv_rmse_std: f64,
}

/// `train`: fit the rate predictor and the derivation model for one link
/// direction and write them next to the map.
///
/// Features come from map lookups, matching what the simulation will feed
/// the models. The derivation model is trained on out-of-fold prediction
/// pairs so it sees honest residuals rather than resubstitution ones.
pub fn train(
    config: &ScenarioConfig,
    out: &Path,
    direction: Direction,
) -> Result<TrainOutcome, PipelineError> {
    let samples = load_campaign_artifact(out)?;
    let rem = load_rem(out)?;
    let directed: Vec<&MeasurementSample> =
        samples.iter().filter(|s| s.direction == direction).collect();
    if directed.is_empty() {
        return Err(PipelineError::BadInput(format!(
            "campaign has no {direction} samples"
        )));
    }

    let looked: Vec<(FeatureVector, f64)> = directed
        .iter()
        .map(|s| {
            let bundle = rem.lookup_with_fallback(s.position)?;
            Ok((FeatureVector::from_bundle(&bundle, s.velocity, s.payload_size), s.data_rate))
        })
        .collect::<Result<_, RemError>>()?;

    // Out-of-fold predictions: every sample is predicted by a model that
    // never saw it.
    let k = 10.min(looked.len());
    let folds = eval::fold_indices(looked.len(), k, config.seed)?;
    let mut pairs = Vec::with_capacity(looked.len());
    let mut fold_rmse = Vec::with_capacity(folds.len());
    for fold in &folds {
        let mut held = vec![false; looked.len()];
        for &i in fold {
            held[i] = true;
        }
        let train_set: Vec<(FeatureVector, f64)> = looked
            .iter()
            .enumerate()
            .filter(|(i, _)| !held[*i])
            .map(|(_, p)| p.clone())
            .collect();
        let model = ForestModel::train(&train_set, config.forest, config.seed)?;
        let mut predicted = Vec::with_capacity(fold.len());
        let mut observed = Vec::with_capacity(fold.len());
        for &i in fold {
            let p = model.predict(&looked[i].0);
            pairs.push((p, looked[i].1));
            predicted.push(p);
            observed.push(looked[i].1);
        }
        fold_rmse.push(eval::rmse(&predicted, &observed)?);
    }
    let cv_rmse_mean = fold_rmse.iter().sum::<f64>() / fold_rmse.len() as f64;
    let cv_rmse_std = (fold_rmse
        .iter()
        .map(|r| (r - cv_rmse_mean) * (r - cv_rmse_mean))
        .sum::<f64>()
        / fold_rmse.len() as f64)
        .sqrt();

    let forest = ForestModel::train(&looked, config.forest, config.seed)?;
    let gpr = GprModel::train(&pairs, None, config.seed)?;

    let mut provenance = Provenance::new("train", config.seed, config);
    provenance.direction = Some(direction);
    let outcome = TrainOutcome {
        forest_path: forest_path(out, direction),
        gpr_path: gpr_path(out, direction),
        direction,
        samples: directed.len(),
        cv_rmse_mean,
        cv_rmse_std,
    };
    write_json_artifact(&outcome.forest_path, provenance.clone(), forest)?;
    write_json_artifact(&outcome.gpr_path, provenance, gpr)?;
    Ok(outcome)
}

pub fn load_models(
    out: &Path,
    direction: Direction,
) -> Result<(ForestModel, GprModel), PipelineError> {
    let forest = read_json_artifact::<ForestModel>(&forest_path(out, direction))?.data;
    let gpr = read_json_artifact::<GprModel>(&gpr_path(out, direction))?.data;
    Ok((forest, gpr))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub scheme: String,
    pub config: SchemeConfig,
    pub runs: usize,
    pub base_seed: u64,
    pub transmissions: usize,
    pub achieved_rate: Summary,
}

pub struct SimulateOutcome {
    pub result_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
    pub summary: SimulateSummary,
}

/// `simulate`: run one scheme over `runs` seeds, write one results CSV per
/// run and a pooled summary.
pub fn simulate(
    config: &ScenarioConfig,
    out: &Path,
    scheme_name: &str,
    runs: usize,
    base_seed: u64,
) -> Result<SimulateOutcome, PipelineError> {
    if runs == 0 {
        return Err(PipelineError::BadInput("need at least one run".into()));
    }
    let scheme = *config.scheme(scheme_name)?;
    let network = config.load_network()?;
    let rem = load_rem(out)?;
    let (forest, gpr) = load_models(out, config.sim.direction)?;

    let mut result_paths = Vec::with_capacity(runs);
    let mut rates = Vec::new();
    let mut transmissions = 0;
    for run in 0..runs {
        let seed = base_seed + run as u64;
        let result = sim::run_simulation(
            &network, &config.sim, &scheme, &forest, &gpr, &rem, seed,
        )?;
        let mut provenance = Provenance::new("simulate", seed, config);
        provenance.scheme = Some(scheme_name.to_string());
        provenance.runs = Some(runs);
        let mut bytes = provenance_comment(&provenance).into_bytes();
        sim::write_records_csv(&result.records, &mut bytes)?;
        let path = results_path(out, scheme_name, run);
        write_atomic(&path, &bytes)?;
        result_paths.push(path);
        transmissions += result.records.len();
        rates.extend(result.records.iter().map(|r| r.achieved_rate));
    }

    let summary = SimulateSummary {
        scheme: scheme_name.to_string(),
        config: scheme,
        runs,
        base_seed,
        transmissions,
        achieved_rate: eval::summarize(&rates)?,
    };
    let mut provenance = Provenance::new("simulate", base_seed, config);
    provenance.scheme = Some(scheme_name.to_string());
    provenance.runs = Some(runs);
    let summary_path = summary_path(out, scheme_name);
    write_json_artifact(&summary_path, provenance, summary.clone())?;
    Ok(SimulateOutcome { result_paths, summary_path, summary })
}

/// Positions of the evaluation trip on the 1 s probe grid, used as the
/// coverage holdout.
pub fn probe_positions(
    network: &RoadNetwork,
    trip: (u32, u32),
) -> Result<Vec<Point>, PipelineError> {
    let ticks = (1.0 / mobility::DEFAULT_DT).round() as u32;
    let mut state = VehicleState::on_trip(network, trip.0, trip.1)?;
    let mut positions = vec![state.position];
    let mut seconds = 0u64;
    while !(state.arrived() && seconds > 0) {
        for _ in 0..ticks {
            state = mobility::step(state, network, mobility::DEFAULT_DT)?;
        }
        seconds += 1;
        positions.push(state.position);
        if seconds > 1_000_000 {
            return Err(PipelineError::BadInput("evaluation trip never completes".into()));
        }
    }
    Ok(positions)
}

pub struct SweepOutcome {
    pub path: PathBuf,
    pub result: SweepResult,
}

/// `sweep`: score every cell width on the campaign and write `sweep.csv`.
pub fn run_sweep(
    config: &ScenarioConfig,
    out: &Path,
    widths: &[f64],
) -> Result<SweepOutcome, PipelineError> {
    let samples = load_campaign_artifact(out)?;
    let network = config.load_network()?;
    let positions = probe_positions(&network, config.sim.trip)?;
    let result = sweep::sweep_cell_width(
        &samples,
        &positions,
        widths,
        config.forest,
        10.min(samples.len()),
        config.seed,
    )?;
    let mut provenance = Provenance::new("sweep", config.seed, config);
    provenance.widths = Some(widths.to_vec());
    let mut bytes = provenance_comment(&provenance).into_bytes();
    result.write_csv(&mut bytes)?;
    let path = sweep_path(out);
    write_atomic(&path, &bytes)?;
    Ok(SweepOutcome { path, result })
}

/// One scheme's modeling-error report: the learned chain simulated against
/// the ground-truth field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeEvaluation {
    pub scheme: String,
    pub modeling_error: ModelingError,
    pub simulated: Summary,
    pub reference: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub runs: usize,
    pub base_seed: u64,
    pub schemes: Vec<SchemeEvaluation>,
}

/// `evaluate`: for every configured scheme, pool achieved rates over
/// `eval_runs` seeds once with the trained derivation model and once with
/// the ground-truth field as rate source, and report how far the learned
/// chain drifts from the world it was trained on.
pub fn evaluate(config: &ScenarioConfig, out: &Path) -> Result<EvaluationReport, PipelineError> {
    let network = config.load_network()?;
    let rem = load_rem(out)?;
    let (forest, gpr) = load_models(out, config.sim.direction)?;
    let oracle = OracleRateSource {
        field: config.field.clone(),
        rate_noise_rel: config.campaign.rate_noise_rel,
        rate_noise_abs: config.campaign.rate_noise_abs,
    };

    let mut schemes = Vec::new();
    for (name, scheme) in &config.schemes {
        let mut simulated = Vec::new();
        let mut reference = Vec::new();
        for run in 0..config.eval_runs {
            let seed = config.seed + run as u64;
            let learned = sim::run_simulation(
                &network, &config.sim, scheme, &forest, &gpr, &rem, seed,
            )?;
            simulated.extend(learned.records.iter().map(|r| r.achieved_rate));
            let truth = sim::run_simulation_with_source(
                &network, &config.sim, scheme, &forest, &oracle, &rem, seed,
            )?;
            reference.extend(truth.records.iter().map(|r| r.achieved_rate));
        }
        schemes.push(SchemeEvaluation {
            scheme: name.clone(),
            modeling_error: eval::aggregated_modeling_error(&simulated, &reference)?,
            simulated: eval::summarize(&simulated)?,
            reference: eval::summarize(&reference)?,
        });
    }

    let report = EvaluationReport {
        runs: config.eval_runs,
        base_seed: config.seed,
        schemes,
    };
    write_json_artifact(
        &evaluation_path(out),
        Provenance::new("evaluate", config.seed, config),
        report.clone(),
    )?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub scheme: String,
    pub simulated_seconds: f64,
    pub wall_seconds: f64,
    pub speedup: f64,
    pub transmissions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub entries: Vec<BenchEntry>,
}

/// `bench`: wall-clock one run per scheme at `bench_duration` simulated
/// seconds and report simulated-seconds-per-wall-second.
pub fn bench(config: &ScenarioConfig, out: &Path) -> Result<BenchReport, PipelineError> {
    let network = config.load_network()?;
    let rem = load_rem(out)?;
    let (forest, gpr) = load_models(out, config.sim.direction)?;
    let scenario = SimScenario {
        duration: Some(config.bench_duration),
        ..config.sim
    };

    let mut entries = Vec::new();
    for (name, scheme) in &config.schemes {
        let start = Instant::now();
        let result: SimulationResult = sim::run_simulation(
            &network, &scenario, scheme, &forest, &gpr, &rem, config.seed,
        )?;
        let wall = start.elapsed().as_secs_f64();
        entries.push(BenchEntry {
            scheme: name.clone(),
            simulated_seconds: result.simulated_time,
            wall_seconds: wall,
            speedup: result.simulated_time / wall.max(1e-9),
            transmissions: result.records.len(),
        });
    }
    let report = BenchReport { entries };
    write_json_artifact(
        &bench_path(out),
        Provenance::new("bench", config.seed, config),
        report.clone(),
    )?;
    Ok(report)
}
