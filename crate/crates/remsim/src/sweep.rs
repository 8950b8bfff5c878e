//! Cell-width tuning: how map granularity trades aggregation gain against
//! spatial blur.
//!
//! For every candidate width the campaign is split into folds; each fold
//! holds out samples, builds the map and the rate models from the rest, and
//! scores lookup error, coverage and end-to-end rate prediction error. Small
//! cells track the field closely but stay sparse; large cells average
//! unrelated locations together. The sweep makes that trade-off measurable.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{self, MetricError};
use crate::geom::Point;
use crate::learners::{FeatureVector, ForestModel, ForestParams, LearnError};
use crate::measurement::{Direction, MeasurementSample};
use crate::rem::{NetworkFeature, Rem, RemError};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    BadInput(String),
    #[error("cannot write sweep report: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Rem(#[from] RemError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// One evaluated cell width. Layer errors are held-out lookup RMSE averaged
/// over folds; rate errors are cross-validated prediction RMSE of models
/// trained on map-looked-up features, with the fold spread alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepColumn {
    pub cell_width: f64,
    /// Plain-lookup miss ratio over the evaluation positions.
    pub miss_ratio: f64,
    pub rsrp_rmse: f64,
    pub rsrq_rmse: f64,
    pub sinr_rmse: f64,
    pub cqi_rmse: f64,
    pub ta_rmse: f64,
    pub rate_rmse_ul: f64,
    pub rate_rmse_ul_std: f64,
    pub rate_rmse_dl: f64,
    pub rate_rmse_dl_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub columns: Vec<SweepColumn>,
}

impl SweepResult {
    pub fn write_csv(&self, w: impl Write) -> Result<(), SweepError> {
        let mut writer = csv::Writer::from_writer(w);
        for c in &self.columns {
            writer.serialize(c)?;
        }
        writer.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Scores every width in `widths` (strictly ascending) by k-fold cross
/// validation over `samples`. `eval_positions` are the trajectory points
/// coverage is judged on. Widths evaluate in parallel.
pub fn sweep_cell_width(
    samples: &[MeasurementSample],
    eval_positions: &[Point],
    widths: &[f64],
    params: ForestParams,
    k: usize,
    seed: u64,
) -> Result<SweepResult, SweepError> {
    if widths.is_empty() {
        return Err(SweepError::BadInput("no widths to sweep".into()));
    }
    if widths.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SweepError::BadInput("widths must be strictly ascending".into()));
    }
    if eval_positions.is_empty() {
        return Err(SweepError::BadInput("no evaluation positions".into()));
    }
    let folds = eval::fold_indices(samples.len(), k, seed)?;

    let columns = widths
        .par_iter()
        .map(|&width| evaluate_width(samples, eval_positions, width, &folds, params, seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult { columns })
}

fn evaluate_width(
    samples: &[MeasurementSample],
    eval_positions: &[Point],
    width: f64,
    folds: &[Vec<usize>],
    params: ForestParams,
    seed: u64,
) -> Result<SweepColumn, SweepError> {
    let mut miss = 0.0;
    let mut layer = [0.0; 5];
    let mut ul = Vec::with_capacity(folds.len());
    let mut dl = Vec::with_capacity(folds.len());

    for fold in folds {
        let mut held_mask = vec![false; samples.len()];
        for &i in fold {
            held_mask[i] = true;
        }
        let train: Vec<MeasurementSample> = samples
            .iter()
            .enumerate()
            .filter(|(i, _)| !held_mask[*i])
            .map(|(_, s)| s.clone())
            .collect();
        let held: Vec<MeasurementSample> = fold.iter().map(|&i| samples[i].clone()).collect();

        let rem = Rem::build(&train, width)?;
        miss += rem.miss_ratio(eval_positions)?;
        for (slot, feature) in layer.iter_mut().zip([
            NetworkFeature::Rsrp,
            NetworkFeature::Rsrq,
            NetworkFeature::Sinr,
            NetworkFeature::Cqi,
            NetworkFeature::Ta,
        ]) {
            *slot += rem.layer_lookup_error(&held, feature)?.0;
        }

        for (direction, scores) in [(Direction::Uplink, &mut ul), (Direction::Downlink, &mut dl)]
        {
            let looked = |s: &MeasurementSample| -> Result<FeatureVector, SweepError> {
                let bundle = rem.lookup_with_fallback(s.position)?;
                Ok(FeatureVector::from_bundle(&bundle, s.velocity, s.payload_size))
            };
            let mut dataset = Vec::new();
            for s in train.iter().filter(|s| s.direction == direction) {
                dataset.push((looked(s)?, s.data_rate));
            }
            let eval_set: Vec<&MeasurementSample> =
                held.iter().filter(|s| s.direction == direction).collect();
            if eval_set.is_empty() {
                continue;
            }
            let forest = ForestModel::train(&dataset, params, seed)?;
            let predicted: Vec<f64> = eval_set
                .iter()
                .map(|s| Ok(forest.predict(&looked(s)?)))
                .collect::<Result<_, SweepError>>()?;
            let observed: Vec<f64> = eval_set.iter().map(|s| s.data_rate).collect();
            scores.push(eval::rmse(&predicted, &observed)?);
        }
    }

    let n = folds.len() as f64;
    let spread = |scores: &[f64]| -> Result<(f64, f64), SweepError> {
        if scores.is_empty() {
            return Err(SweepError::BadInput(
                "a direction has no held-out samples in any fold".into(),
            ));
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let var =
            scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / scores.len() as f64;
        Ok((mean, var.sqrt()))
    };
    let (rate_rmse_ul, rate_rmse_ul_std) = spread(&ul)?;
    let (rate_rmse_dl, rate_rmse_dl_std) = spread(&dl)?;

    Ok(SweepColumn {
        cell_width: width,
        miss_ratio: miss / n,
        rsrp_rmse: layer[0] / n,
        rsrq_rmse: layer[1] / n,
        sinr_rmse: layer[2] / n,
        cqi_rmse: layer[3] / n,
        ta_rmse: layer[4] / n,
        rate_rmse_ul,
        rate_rmse_ul_std,
        rate_rmse_dl,
        rate_rmse_dl_std,
    })
}
