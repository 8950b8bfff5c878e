//! Random-forest regression of the data rate: bootstrap-bagged binary trees
//! with per-split random feature subsets and variance-reduction splits.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CellVocab, FeatureVector, LearnError, ENCODED_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub num_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub features_per_split: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        // features_per_split is the square root of the encoded feature
        // count, rounded up.
        ForestParams { num_trees: 100, max_depth: 12, min_leaf: 5, features_per_split: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

impl Node {
    fn predict(&self, x: &[f64; ENCODED_DIM]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub root: Node,
}

/// Trained forest. Immutable; prediction is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<Tree>,
    params: ForestParams,
    vocab: CellVocab,
    training_seed: u64,
}

impl ForestModel {
    /// Fits `params.num_trees` trees on bootstrap resamples of the dataset.
    /// The same seed and dataset always produce the identical model.
    pub fn train(
        dataset: &[(FeatureVector, f64)],
        params: ForestParams,
        seed: u64,
    ) -> Result<ForestModel, LearnError> {
        if dataset.len() < 10 {
            return Err(LearnError::TooFewSamples { got: dataset.len(), need: 10 });
        }
        if params.num_trees == 0 || params.min_leaf == 0 {
            return Err(LearnError::BadParams(
                "num_trees and min_leaf must be >= 1".into(),
            ));
        }
        if params.features_per_split == 0 || params.features_per_split > ENCODED_DIM {
            return Err(LearnError::BadParams(format!(
                "features_per_split must be in 1..={ENCODED_DIM}"
            )));
        }
        for (_, label) in dataset {
            if !label.is_finite() || *label < 0.0 {
                return Err(LearnError::InvalidLabel(*label));
            }
        }

        let vocab = CellVocab::from_ids(dataset.iter().map(|(f, _)| f.cell_id));
        let encoded: Vec<[f64; ENCODED_DIM]> =
            dataset.iter().map(|(f, _)| f.encode(&vocab)).collect();
        let labels: Vec<f64> = dataset.iter().map(|(_, y)| *y).collect();

        // Per-tree seeds are drawn up front so tree construction can run in
        // parallel without perturbing determinism.
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let tree_seeds: Vec<u64> = (0..params.num_trees).map(|_| master.gen()).collect();
        let trees: Vec<Tree> = tree_seeds
            .par_iter()
            .map(|tree_seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(*tree_seed);
                let indices: Vec<usize> =
                    (0..encoded.len()).map(|_| rng.gen_range(0..encoded.len())).collect();
                Tree { root: grow(&encoded, &labels, indices, &params, 0, &mut rng) }
            })
            .collect();

        Ok(ForestModel { trees, params, vocab, training_seed: seed })
    }

    /// Mean of the per-tree outputs, clamped at zero.
    pub fn predict(&self, f: &FeatureVector) -> f64 {
        let x = f.encode(&self.vocab);
        let sum: f64 = self.trees.iter().map(|t| t.root.predict(&x)).sum();
        (sum / self.trees.len() as f64).max(0.0)
    }

    pub fn params(&self) -> ForestParams {
        self.params
    }

    pub fn training_seed(&self) -> u64 {
        self.training_seed
    }

    pub fn vocab(&self) -> &CellVocab {
        &self.vocab
    }
}

fn grow(
    data: &[[f64; ENCODED_DIM]],
    labels: &[f64],
    indices: Vec<usize>,
    params: &ForestParams,
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> Node {
    let mean = indices.iter().map(|&i| labels[i]).sum::<f64>() / indices.len() as f64;
    if depth >= params.max_depth || indices.len() < 2 * params.min_leaf {
        return Node::Leaf { value: mean };
    }

    // Candidate features for this split, then examined in ascending order so
    // equal-gain ties resolve the same way regardless of draw order.
    let mut features: Vec<usize> = (0..ENCODED_DIM).collect();
    let (chosen, _) = features.partial_shuffle(rng, params.features_per_split);
    let mut chosen: Vec<usize> = chosen.to_vec();
    chosen.sort_unstable();

    let parent_sse = sse(labels, &indices);
    let mut best: Option<(f64, usize, f64)> = None;
    for feature in chosen {
        let mut order = indices.clone();
        order.sort_by(|a, b| data[*a][feature].total_cmp(&data[*b][feature]));
        let total_sum: f64 = order.iter().map(|&i| labels[i]).sum();
        let total_sq: f64 = order.iter().map(|&i| labels[i] * labels[i]).sum();
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for k in 1..order.len() {
            let y = labels[order[k - 1]];
            left_sum += y;
            left_sq += y * y;
            if k < params.min_leaf || order.len() - k < params.min_leaf {
                continue;
            }
            let lo = data[order[k - 1]][feature];
            let hi = data[order[k]][feature];
            if lo == hi {
                continue;
            }
            let nl = k as f64;
            let nr = (order.len() - k) as f64;
            let sse_left = left_sq - left_sum * left_sum / nl;
            let right_sum = total_sum - left_sum;
            let sse_right = (total_sq - left_sq) - right_sum * right_sum / nr;
            let gain = parent_sse - sse_left - sse_right;
            if gain > best.map_or(1e-12, |(g, _, _)| g) {
                best = Some((gain, feature, 0.5 * (lo + hi)));
            }
        }
    }

    let Some((_, feature, threshold)) = best else {
        return Node::Leaf { value: mean };
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        indices.into_iter().partition(|&i| data[i][feature] <= threshold);
    Node::Split {
        feature,
        threshold,
        left: Box::new(grow(data, labels, left_idx, params, depth + 1, rng)),
        right: Box::new(grow(data, labels, right_idx, params, depth + 1, rng)),
    }
}

fn sse(labels: &[f64], indices: &[usize]) -> f64 {
    let n = indices.len() as f64;
    let sum: f64 = indices.iter().map(|&i| labels[i]).sum();
    let sq: f64 = indices.iter().map(|&i| labels[i] * labels[i]).sum();
    sq - sum * sum / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::rmse;
    use approx::assert_relative_eq;

    fn feature(sinr: f64, velocity: f64) -> FeatureVector {
        FeatureVector {
            rsrp: -80.0,
            rsrq: -10.0,
            sinr,
            cqi: 8.0,
            ta: 3.0,
            velocity,
            cell_id: 1,
            payload_size: 1000,
        }
    }

    /// Noisy monotone rate curve over sinr and velocity.
    fn synthetic_dataset(n: usize, seed: u64) -> Vec<(FeatureVector, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let sinr = rng.gen_range(-5.0..25.0);
                let velocity = rng.gen_range(0.0..30.0);
                let rate =
                    f64::max(0.4 * sinr + 8.0 - 0.1 * velocity + rng.gen_range(-1.0..1.0), 0.0);
                (feature(sinr, velocity), rate)
            })
            .collect()
    }

    #[test]
    fn depth_zero_trees_predict_bootstrap_means() {
        let constant: Vec<(FeatureVector, f64)> =
            (0..40).map(|k| (feature(k as f64, 1.0), 7.25)).collect();
        let params = ForestParams { max_depth: 0, ..ForestParams::default() };
        let model = ForestModel::train(&constant, params, 3).unwrap();
        assert_relative_eq!(model.predict(&feature(99.0, 0.0)), 7.25);

        // With varying labels each stump holds its bootstrap mean; the
        // forest average stays close to the global mean.
        let varied = synthetic_dataset(400, 8);
        let global = varied.iter().map(|(_, y)| y).sum::<f64>() / varied.len() as f64;
        let model = ForestModel::train(&varied, params, 3).unwrap();
        assert_relative_eq!(model.predict(&feature(0.0, 0.0)), global, epsilon = 0.2);
    }

    #[test]
    fn separable_rule_is_learned_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dataset: Vec<(FeatureVector, f64)> = (0..120)
            .map(|_| {
                // A margin around the decision boundary keeps the rule
                // separable under midpoint thresholds.
                let sinr = if rng.gen_bool(0.5) {
                    rng.gen_range(-5.0..9.0)
                } else {
                    rng.gen_range(11.0..25.0)
                };
                let label = if sinr > 10.0 { 1.0 } else { 0.0 };
                (feature(sinr, rng.gen_range(0.0..30.0)), label)
            })
            .collect();
        let params = ForestParams { min_leaf: 2, ..ForestParams::default() };
        let model = ForestModel::train(&dataset, params, 11).unwrap();
        for (f, label) in &dataset {
            assert!((model.predict(f) - label).abs() < 0.5);
        }
    }

    #[test]
    fn same_seed_same_model_different_seed_different_model() {
        let dataset = synthetic_dataset(200, 1);
        let a = ForestModel::train(&dataset, ForestParams::default(), 42).unwrap();
        let b = ForestModel::train(&dataset, ForestParams::default(), 42).unwrap();
        assert_eq!(a, b);
        let probes: Vec<FeatureVector> =
            (0..50).map(|k| feature(k as f64 * 0.5 - 5.0, k as f64 * 0.6)).collect();
        for p in &probes {
            assert_eq!(a.predict(p).to_bits(), b.predict(p).to_bits());
        }
        let c = ForestModel::train(&dataset, ForestParams::default(), 43).unwrap();
        assert!(probes.iter().any(|p| a.predict(p) != c.predict(p)));
    }

    #[test]
    fn forest_output_is_the_tree_average() {
        let leaf = |v: f64| Tree { root: Node::Leaf { value: v } };
        let model = ForestModel {
            trees: vec![leaf(1.0), leaf(2.0), leaf(6.0)],
            params: ForestParams::default(),
            vocab: CellVocab::from_ids([1]),
            training_seed: 0,
        };
        assert_relative_eq!(model.predict(&feature(0.0, 0.0)), 3.0);

        let single = ForestModel {
            trees: vec![leaf(5.0)],
            params: ForestParams::default(),
            vocab: CellVocab::from_ids([1]),
            training_seed: 0,
        };
        assert_relative_eq!(single.predict(&feature(0.0, 0.0)), 5.0);
    }

    #[test]
    fn predictions_stay_inside_the_label_range() {
        let dataset = synthetic_dataset(300, 2);
        let min = dataset.iter().map(|(_, y)| *y).fold(f64::INFINITY, f64::min);
        let max = dataset.iter().map(|(_, y)| *y).fold(f64::NEG_INFINITY, f64::max);
        let model = ForestModel::train(&dataset, ForestParams::default(), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let p = model.predict(&feature(rng.gen_range(-20.0..40.0), rng.gen_range(0.0..60.0)));
            assert!(p >= min - 1e-12 && p <= max + 1e-12);
        }
    }

    #[test]
    fn beats_the_constant_predictor_held_out() {
        let train = synthetic_dataset(600, 4);
        let held = synthetic_dataset(200, 14);
        let params = ForestParams { max_depth: 8, ..ForestParams::default() };
        let model = ForestModel::train(&train, params, 21).unwrap();

        let mean = train.iter().map(|(_, y)| y).sum::<f64>() / train.len() as f64;
        let observed: Vec<f64> = held.iter().map(|(_, y)| *y).collect();
        let forest_pred: Vec<f64> = held.iter().map(|(f, _)| model.predict(f)).collect();
        let constant_pred = vec![mean; held.len()];
        assert!(
            rmse(&forest_pred, &observed).unwrap() < rmse(&constant_pred, &observed).unwrap()
        );
    }

    #[test]
    fn rejects_degenerate_training_input() {
        let tiny = synthetic_dataset(5, 1);
        assert!(matches!(
            ForestModel::train(&tiny, ForestParams::default(), 0),
            Err(LearnError::TooFewSamples { got: 5, need: 10 })
        ));
        let mut bad = synthetic_dataset(20, 1);
        bad[3].1 = -1.0;
        assert!(matches!(
            ForestModel::train(&bad, ForestParams::default(), 0),
            Err(LearnError::InvalidLabel(_))
        ));
        let params = ForestParams { features_per_split: 9, ..ForestParams::default() };
        assert!(matches!(
            ForestModel::train(&synthetic_dataset(20, 1), params, 0),
            Err(LearnError::BadParams(_))
        ));
    }

    #[test]
    fn model_json_round_trips() {
        let dataset = synthetic_dataset(60, 6);
        let params = ForestParams { num_trees: 10, ..ForestParams::default() };
        let model = ForestModel::train(&dataset, params, 31).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let restored: ForestModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, restored);
    }
}
