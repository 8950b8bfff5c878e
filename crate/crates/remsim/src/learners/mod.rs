//! The two learned models of the simulation pipeline: a random-forest
//! data-rate predictor and a Gaussian-process derivation model that turns
//! deterministic predictions into sampled virtual ground truth.

mod forest;
mod gpr;

pub use forest::{ForestModel, ForestParams, Node, Tree};
pub use gpr::{GprModel, Hyperparams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measurement::MeasurementSample;
use crate::rem::FeatureBundle;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("need at least {need} training samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("training labels must be finite and >= 0, got {0}")]
    InvalidLabel(f64),
    #[error("invalid training parameters: {0}")]
    BadParams(String),
    #[error("kernel matrix is singular even with jitter up to {max_jitter}")]
    SingularKernel { max_jitter: f64 },
}

/// Input of the data-rate predictor: network context (from a REM or a live
/// measurement), mobility context and application context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub rsrp: f64,
    pub rsrq: f64,
    pub sinr: f64,
    pub cqi: f64,
    pub ta: f64,
    pub velocity: f64,
    pub cell_id: u32,
    pub payload_size: u64,
}

/// Number of numeric columns a [`FeatureVector`] encodes to.
pub const ENCODED_DIM: usize = 8;

impl FeatureVector {
    pub fn from_sample(s: &MeasurementSample) -> FeatureVector {
        FeatureVector {
            rsrp: s.rsrp,
            rsrq: s.rsrq,
            sinr: s.sinr,
            cqi: s.cqi,
            ta: s.ta,
            velocity: s.velocity,
            cell_id: s.cell_id,
            payload_size: s.payload_size,
        }
    }

    /// Combines a REM lookup with the mobility and application context of
    /// the moment the prediction is for.
    pub fn from_bundle(bundle: &FeatureBundle, velocity: f64, payload_size: u64) -> FeatureVector {
        FeatureVector {
            rsrp: bundle.rsrp,
            rsrq: bundle.rsrq,
            sinr: bundle.sinr,
            cqi: bundle.cqi,
            ta: bundle.ta,
            velocity,
            cell_id: bundle.cell_id,
            payload_size,
        }
    }

    fn encode(&self, vocab: &CellVocab) -> [f64; ENCODED_DIM] {
        [
            self.rsrp,
            self.rsrq,
            self.sinr,
            self.cqi,
            self.ta,
            self.velocity,
            vocab.code(self.cell_id),
            self.payload_size as f64,
        ]
    }
}

/// Integer coding of cell identifiers with a fixed training-time vocabulary.
/// Identifiers outside the vocabulary map to one shared unknown code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellVocab {
    ids: Vec<u32>,
}

impl CellVocab {
    pub fn from_ids(ids: impl IntoIterator<Item = u32>) -> CellVocab {
        let mut ids: Vec<u32> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        CellVocab { ids }
    }

    /// Rank of the identifier, or the one-past-the-end unknown code.
    pub fn code(&self, id: u32) -> f64 {
        match self.ids.binary_search(&id) {
            Ok(rank) => rank as f64,
            Err(_) => self.ids.len() as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}
