//! Error metrics, cross-validation and distribution comparison.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric over empty input")]
    Empty,
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("fold count {k} invalid for {n} observations (need 2 <= k <= n)")]
    BadFoldCount { k: usize, n: usize },
    #[error("reference distribution has zero mean")]
    ZeroReference,
}

fn paired(predicted: &[f64], observed: &[f64]) -> Result<(), MetricError> {
    if predicted.len() != observed.len() {
        return Err(MetricError::LengthMismatch { a: predicted.len(), b: observed.len() });
    }
    if predicted.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Root mean squared error between paired predictions and observations.
pub fn rmse(predicted: &[f64], observed: &[f64]) -> Result<f64, MetricError> {
    paired(predicted, observed)?;
    let mse = predicted
        .iter()
        .zip(observed)
        .map(|(p, o)| (p - o) * (p - o))
        .sum::<f64>()
        / predicted.len() as f64;
    Ok(mse.sqrt())
}

/// Mean absolute error between paired predictions and observations.
pub fn mae(predicted: &[f64], observed: &[f64]) -> Result<f64, MetricError> {
    paired(predicted, observed)?;
    Ok(predicted.iter().zip(observed).map(|(p, o)| (p - o).abs()).sum::<f64>()
        / predicted.len() as f64)
}

/// Absolute deviation of the sample means, relative to the reference mean.
pub fn relative_mean_error(values: &[f64], reference: &[f64]) -> Result<f64, MetricError> {
    if values.is_empty() || reference.is_empty() {
        return Err(MetricError::Empty);
    }
    let mv = values.iter().sum::<f64>() / values.len() as f64;
    let mr = reference.iter().sum::<f64>() / reference.len() as f64;
    Ok((mv - mr).abs() / mr.abs().max(f64::EPSILON))
}

/// The two ways this crate scores how well a simulated rate distribution
/// matches a reference one. Which of the two a report should lead with is
/// deliberately left to the report; both are always computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelingError {
    /// |mean(sim) - mean(ref)| / mean(ref).
    pub relative_mean: f64,
    /// First Wasserstein distance between the empirical distributions.
    pub wasserstein: f64,
}

pub fn aggregated_modeling_error(
    sim: &[f64],
    reference: &[f64],
) -> Result<ModelingError, MetricError> {
    if sim.is_empty() || reference.is_empty() {
        return Err(MetricError::Empty);
    }
    let mr = reference.iter().sum::<f64>() / reference.len() as f64;
    if mr == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let ms = sim.iter().sum::<f64>() / sim.len() as f64;
    Ok(ModelingError {
        relative_mean: (ms - mr).abs() / mr.abs(),
        wasserstein: wasserstein_1(sim, reference)?,
    })
}

/// Five-number summary plus mean, using linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 == sorted.len() {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
    }
}

pub fn summarize(values: &[f64]) -> Result<Summary, MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        n: sorted.len(),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

/// First Wasserstein distance between two empirical distributions, computed
/// exactly by integrating the gap between the quantile functions. The inputs
/// may differ in length.
pub fn wasserstein_1(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (n, m) = (sa.len(), sb.len());

    // Walk the merged jump points of both quantile functions. Levels are
    // kept as integer multiples of 1/(n*m), so segment boundaries are exact.
    let denom = (n as u128 * m as u128) as f64;
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut level = 0u128;
    let mut total = 0.0;
    while ia < n && ib < m {
        let next_a = (ia as u128 + 1) * m as u128;
        let next_b = (ib as u128 + 1) * n as u128;
        let next = next_a.min(next_b);
        total += ((next - level) as f64 / denom) * (sa[ia] - sb[ib]).abs();
        level = next;
        if next_a == next {
            ia += 1;
        }
        if next_b == next {
            ib += 1;
        }
    }
    Ok(total)
}

/// Shuffled, near-equal-size fold assignment for k-fold cross-validation.
///
/// Indices `0..n` are shuffled with a seeded generator and split into `k`
/// contiguous chunks whose sizes differ by at most one. The same `(n, k,
/// seed)` always yields the same partition.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, MetricError> {
    if k < 2 || k > n {
        return Err(MetricError::BadFoldCount { k, n });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(indices[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Per-fold scores of a k-fold cross-validation with their mean and
/// population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl CrossValidation {
    fn from_scores(fold_scores: Vec<f64>) -> CrossValidation {
        let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
        let var = fold_scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
            / fold_scores.len() as f64;
        CrossValidation { fold_scores, mean, std: var.sqrt() }
    }
}

/// Runs k-fold cross-validation: for every fold, `train` fits a model on the
/// remaining observations and `score` evaluates it on the held-out fold.
pub fn cross_validate<T, M>(
    data: &[T],
    k: usize,
    seed: u64,
    mut train: impl FnMut(&[&T]) -> M,
    mut score: impl FnMut(&M, &[&T]) -> f64,
) -> Result<CrossValidation, MetricError> {
    let folds = fold_indices(data.len(), k, seed)?;
    let mut fold_scores = Vec::with_capacity(k);
    for held_out in &folds {
        let held: Vec<&T> = held_out.iter().map(|&i| &data[i]).collect();
        let train_set: Vec<&T> = folds
            .iter()
            .filter(|f| !std::ptr::eq(*f, held_out))
            .flatten()
            .map(|&i| &data[i])
            .collect();
        let model = train(&train_set);
        fold_scores.push(score(&model, &held));
    }
    Ok(CrossValidation::from_scores(fold_scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn rmse_and_mae_on_hand_computed_pairs() {
        let predicted = [2.0, 2.0];
        let observed = [0.0, 2.0];
        assert_relative_eq!(mae(&predicted, &observed).unwrap(), 1.0);
        assert_relative_eq!(rmse(&predicted, &observed).unwrap(), 2.0_f64.sqrt());
    }

    #[test]
    fn metrics_reject_bad_shapes() {
        assert_eq!(rmse(&[], &[]), Err(MetricError::Empty));
        assert_eq!(mae(&[1.0], &[1.0, 2.0]), Err(MetricError::LengthMismatch { a: 1, b: 2 }));
    }

    #[test]
    fn rmse_dominates_mae() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a: Vec<f64> = (0..40).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let b: Vec<f64> = (0..40).map(|_| rng.gen_range(-10.0..10.0)).collect();
            assert!(rmse(&a, &b).unwrap() >= mae(&a, &b).unwrap() - 1e-12);
        }
    }

    #[test]
    fn wasserstein_hand_computed_cases() {
        assert_relative_eq!(wasserstein_1(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_relative_eq!(wasserstein_1(&[0.0], &[5.0]).unwrap(), 5.0);
        assert_relative_eq!(wasserstein_1(&[0.0, 0.0, 0.0], &[3.0]).unwrap(), 3.0);
        // Same distribution expressed at different sample sizes.
        assert_relative_eq!(wasserstein_1(&[0.0, 1.0], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.0);
        let xs = [0.4, -1.2, 3.3, 8.0];
        assert_relative_eq!(wasserstein_1(&xs, &xs).unwrap(), 0.0);
    }

    #[test]
    fn wasserstein_is_symmetric_and_shifts_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..5.0)).collect();
        let b: Vec<f64> = (0..37).map(|_| rng.gen_range(0.0..5.0)).collect();
        let d_ab = wasserstein_1(&a, &b).unwrap();
        let d_ba = wasserstein_1(&b, &a).unwrap();
        assert_relative_eq!(d_ab, d_ba, max_relative = 1e-12);
        // Shifting one sample by a constant moves the distance by at most
        // that constant, exactly by it when the shift dominates.
        let shifted: Vec<f64> = a.iter().map(|x| x + 100.0).collect();
        assert_relative_eq!(
            wasserstein_1(&shifted, &a).unwrap(),
            100.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn relative_mean_error_cases() {
        assert_relative_eq!(relative_mean_error(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(relative_mean_error(&[3.0], &[2.0]).unwrap(), 0.5);
    }

    #[test]
    fn folds_partition_every_index_exactly_once() {
        let folds = fold_indices(25, 10, 42).unwrap();
        assert_eq!(folds.len(), 10);
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 2, 3, 3, 3, 3, 3]);
        let mut seen = vec![0u8; 25];
        for idx in folds.iter().flatten() {
            seen[*idx] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn folds_are_seed_deterministic() {
        assert_eq!(fold_indices(100, 10, 3).unwrap(), fold_indices(100, 10, 3).unwrap());
        assert_ne!(fold_indices(100, 10, 3).unwrap(), fold_indices(100, 10, 4).unwrap());
        assert_eq!(
            fold_indices(3, 10, 0),
            Err(MetricError::BadFoldCount { k: 10, n: 3 })
        );
    }

    #[test]
    fn cross_validation_scores_every_fold() {
        let data: Vec<f64> = (0..10).map(f64::from).collect();
        let cv = cross_validate(
            &data,
            5,
            1,
            |train| train.iter().map(|x| **x).sum::<f64>() / train.len() as f64,
            |model, held| {
                let held: Vec<f64> = held.iter().map(|x| **x).collect();
                let predicted = vec![*model; held.len()];
                mae(&predicted, &held).unwrap()
            },
        )
        .unwrap();
        assert_eq!(cv.fold_scores.len(), 5);
        assert!(cv.fold_scores.iter().all(|s| s.is_finite() && *s >= 0.0));
        let rerun = cross_validate(
            &data,
            5,
            1,
            |train| train.iter().map(|x| **x).sum::<f64>() / train.len() as f64,
            |model, held| {
                let held: Vec<f64> = held.iter().map(|x| **x).collect();
                let predicted = vec![*model; held.len()];
                mae(&predicted, &held).unwrap()
            },
        )
        .unwrap();
        assert_eq!(cv, rerun);
    }

    #[test]
    fn constant_scores_have_zero_spread() {
        let data = [0u8; 12];
        let cv = cross_validate(&data, 4, 9, |_| (), |_, _| 1.5).unwrap();
        assert_relative_eq!(cv.mean, 1.5);
        assert_relative_eq!(cv.std, 0.0);
    }

    #[test]
    fn modeling_error_reports_both_routes() {
        let same = aggregated_modeling_error(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap();
        assert_relative_eq!(same.relative_mean, 0.0);
        assert_relative_eq!(same.wasserstein, 0.0);

        let hand = aggregated_modeling_error(&[1.0, 3.0], &[2.0, 2.0]).unwrap();
        assert_relative_eq!(hand.relative_mean, 0.0);
        assert_relative_eq!(hand.wasserstein, 1.0);

        let doubled = aggregated_modeling_error(&[4.0, 4.0], &[2.0, 2.0]).unwrap();
        assert_relative_eq!(doubled.relative_mean, 1.0);

        assert_eq!(
            aggregated_modeling_error(&[1.0], &[-1.0, 1.0]),
            Err(MetricError::ZeroReference)
        );
        assert_eq!(aggregated_modeling_error(&[], &[1.0]), Err(MetricError::Empty));
    }

    #[test]
    fn summary_quartiles_interpolate() {
        let odd = summarize(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_relative_eq!(odd.q1, 2.0);
        assert_relative_eq!(odd.median, 3.0);
        assert_relative_eq!(odd.q3, 4.0);
        assert_relative_eq!(odd.mean, 3.0);

        let even = summarize(&[4.0, 2.0, 1.0, 3.0]).unwrap();
        assert_relative_eq!(even.q1, 1.75);
        assert_relative_eq!(even.median, 2.5);
        assert_relative_eq!(even.q3, 3.25);
        assert_eq!((even.min, even.max, even.n), (1.0, 4.0, 4));

        let single = summarize(&[7.0]).unwrap();
        assert_eq!((single.min, single.median, single.max), (7.0, 7.0, 7.0));
        assert_eq!(summarize(&[]), Err(MetricError::Empty));
    }
}
