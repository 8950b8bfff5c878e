//! Gaussian-process derivation model: learns the uncertainty of the
//! deterministic predictor from (predicted, measured) rate pairs and samples
//! virtual ground truth from the posterior.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LearnError;

/// Squared-exponential kernel hyperparameters. The noise variance acts on
/// the diagonal only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl Hyperparams {
    fn validate(&self) -> Result<(), LearnError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.length_scale) && ok(self.signal_var) && ok(self.noise_var) {
            Ok(())
        } else {
            Err(LearnError::BadParams(format!("hyperparameters must be > 0: {self:?}")))
        }
    }
}

/// Training pairs kept in the model, at most.
const MAX_TRAIN: usize = 2000;
/// Pairs used while grid-searching hyperparameters.
const SEARCH_MAX: usize = 400;

/// Trained derivation model over scalar predicted rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GprJson", into = "GprJson")]
pub struct GprModel {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    hyper: Hyperparams,
    prior_mean: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    lml: f64,
}

impl GprModel {
    /// Fits the model on (predicted, measured) pairs. More than
    /// [`MAX_TRAIN`] pairs are reduced by a seeded uniform subsample. With
    /// `hyper = None` the hyperparameters maximizing the log marginal
    /// likelihood over a log-spaced grid are chosen.
    pub fn train(
        pairs: &[(f64, f64)],
        hyper: Option<Hyperparams>,
        seed: u64,
    ) -> Result<GprModel, LearnError> {
        if pairs.len() < 5 {
            return Err(LearnError::TooFewSamples { got: pairs.len(), need: 5 });
        }
        for (s, y) in pairs {
            if !s.is_finite() || !y.is_finite() {
                return Err(LearnError::InvalidLabel(if s.is_finite() { *y } else { *s }));
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (inputs, targets) = subsample(pairs, MAX_TRAIN, &mut rng);

        let hyper = match hyper {
            Some(h) => {
                h.validate()?;
                h
            }
            None => grid_search(&inputs, &targets, &mut rng)?,
        };

        let fit = fit(&inputs, &targets, hyper)?;
        Ok(GprModel {
            inputs,
            targets,
            hyper,
            prior_mean: fit.prior_mean,
            chol: fit.chol,
            alpha: fit.alpha,
            lml: fit.lml,
        })
    }

    /// Posterior mean and standard deviation of the measured rate at a
    /// predicted rate, including observation noise.
    pub fn posterior(&self, s_pred: f64) -> (f64, f64) {
        let n = self.inputs.len();
        let kstar: Vec<f64> =
            self.inputs.iter().map(|x| kernel(self.hyper, *x, s_pred)).collect();
        let mean = self.prior_mean
            + kstar.iter().zip(&self.alpha).map(|(k, a)| k * a).sum::<f64>();
        // var = prior - || L^-1 k* ||^2
        let mut v = kstar;
        for i in 0..n {
            let mut sum = v[i];
            for k in 0..i {
                sum -= self.chol[i * n + k] * v[k];
            }
            v[i] = sum / self.chol[i * n + i];
        }
        let prior = self.hyper.signal_var + self.hyper.noise_var;
        let var = prior - v.iter().map(|x| x * x).sum::<f64>();
        (mean, var.max(0.0).sqrt())
    }

    /// Draws one virtual ground truth value: Normal(posterior mean,
    /// posterior std), clamped at zero. Always consumes exactly one draw
    /// from `rng`.
    pub fn sample(&self, s_pred: f64, rng: &mut impl Rng) -> f64 {
        let (mean, std) = self.posterior(s_pred);
        let z: f64 = rng.sample(StandardNormal);
        (mean + std * z).max(0.0)
    }

    pub fn hyper(&self) -> Hyperparams {
        self.hyper
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    pub fn training_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.inputs.iter().copied().zip(self.targets.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

fn kernel(h: Hyperparams, a: f64, b: f64) -> f64 {
    let d = a - b;
    h.signal_var * (-d * d / (2.0 * h.length_scale * h.length_scale)).exp()
}

fn subsample(pairs: &[(f64, f64)], cap: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    if pairs.len() <= cap {
        return pairs.iter().copied().unzip();
    }
    let mut picked = rand::seq::index::sample(rng, pairs.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pairs[i]).unzip()
}

struct Fit {
    prior_mean: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    lml: f64,
}

fn fit(inputs: &[f64], targets: &[f64], hyper: Hyperparams) -> Result<Fit, LearnError> {
    let n = inputs.len();
    let prior_mean = targets.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = targets.iter().map(|y| y - prior_mean).collect();

    let scale = hyper.signal_var.max(hyper.noise_var).max(1e-12);
    let mut max_jitter = 0.0;
    for jitter_factor in [0.0, 1e-10, 1e-8, 1e-6, 1e-4] {
        let jitter = jitter_factor * scale;
        max_jitter = jitter;
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut v = kernel(hyper, inputs[i], inputs[j]);
                if i == j {
                    v += hyper.noise_var + jitter;
                }
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        if !cholesky_in_place(&mut k, n) {
            continue;
        }
        let alpha = solve_with_factor(&k, n, &centered);
        let log_det_half: f64 = (0..n).map(|i| k[i * n + i].ln()).sum();
        let lml = -0.5 * centered.iter().zip(&alpha).map(|(y, a)| y * a).sum::<f64>()
            - log_det_half
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        return Ok(Fit { prior_mean, chol: k, alpha, lml });
    }
    Err(LearnError::SingularKernel { max_jitter })
}

/// Lower Cholesky factor in place (row-major); the upper triangle is
/// overwritten with zeros. Fails on a non-positive pivot.
fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return false;
                }
                a[i * n + i] = sum.sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    true
}

/// Solves (L L^T) x = b given the lower factor.
fn solve_with_factor(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        let mut sum = x[i];
        for k in 0..i {
            sum -= l[i * n + k] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut sum = x[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

fn grid_search(
    inputs: &[f64],
    targets: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Hyperparams, LearnError> {
    let pairs: Vec<(f64, f64)> =
        inputs.iter().copied().zip(targets.iter().copied()).collect();
    let (xs, ys) = subsample(&pairs, SEARCH_MAX, rng);

    let range = {
        let min = xs.iter().fold(f64::INFINITY, |a, b| a.min(*b));
        let max = xs.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        (max - min).max(1e-6)
    };
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let std = (ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / ys.len() as f64)
        .sqrt()
        .max(1e-6);

    let mut best: Option<(f64, Hyperparams)> = None;
    for lf in [0.02, 0.05, 0.1, 0.2, 0.5, 1.0] {
        for sf in [0.5, 1.0, 2.0] {
            for nf in [0.1, 0.3, 0.5, 1.0] {
                let h = Hyperparams {
                    length_scale: lf * range,
                    signal_var: (sf * std) * (sf * std),
                    noise_var: (nf * std) * (nf * std),
                };
                let Ok(f) = fit(&xs, &ys, h) else { continue };
                if best.map_or(true, |(l, _)| f.lml > l) {
                    best = Some((f.lml, h));
                }
            }
        }
    }
    best.map(|(_, h)| h).ok_or(LearnError::SingularKernel { max_jitter: 1e-4 })
}

#[derive(Serialize, Deserialize)]
struct GprJson {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    hyper: Hyperparams,
}

impl From<GprModel> for GprJson {
    fn from(m: GprModel) -> Self {
        GprJson { inputs: m.inputs, targets: m.targets, hyper: m.hyper }
    }
}

impl TryFrom<GprJson> for GprModel {
    type Error = LearnError;

    fn try_from(json: GprJson) -> Result<Self, Self::Error> {
        if json.inputs.len() != json.targets.len() {
            return Err(LearnError::BadParams(format!(
                "stored pairs mismatched: {} inputs vs {} targets",
                json.inputs.len(),
                json.targets.len()
            )));
        }
        let pairs: Vec<(f64, f64)> =
            json.inputs.into_iter().zip(json.targets).collect();
        GprModel::train(&pairs, Some(json.hyper), 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line_pairs() -> Vec<(f64, f64)> {
        (0..5).map(|k| (k as f64, 2.0 * k as f64 + 1.0)).collect()
    }

    fn tight() -> Hyperparams {
        Hyperparams { length_scale: 0.5, signal_var: 4.0, noise_var: 1e-10 }
    }

    #[test]
    fn near_noiseless_model_interpolates_its_targets() {
        let model = GprModel::train(&line_pairs(), Some(tight()), 0).unwrap();
        for (x, y) in line_pairs() {
            let (mean, _) = model.posterior(x);
            assert_relative_eq!(mean, y, epsilon = 1e-6);
        }
    }

    #[test]
    fn constant_targets_give_a_flat_posterior() {
        let pairs: Vec<(f64, f64)> = (0..8).map(|k| (k as f64, 3.0)).collect();
        let h = Hyperparams { length_scale: 1.0, signal_var: 2.0, noise_var: 0.1 };
        let model = GprModel::train(&pairs, Some(h), 0).unwrap();
        for q in [-5.0, 0.0, 3.5, 20.0] {
            let (mean, std) = model.posterior(q);
            assert_relative_eq!(mean, 3.0, epsilon = 1e-9);
            assert!(std <= (2.0 + 0.1_f64).sqrt() + 1e-12);
            assert!(std > 0.0);
        }
    }

    #[test]
    fn far_from_data_the_prior_takes_over() {
        let h = Hyperparams { length_scale: 1.0, signal_var: 2.0, noise_var: 0.5 };
        let model = GprModel::train(&line_pairs(), Some(h), 0).unwrap();
        let (mean, std) = model.posterior(1000.0);
        assert_relative_eq!(mean, model.prior_mean(), epsilon = 1e-9);
        assert_relative_eq!(std, 2.5_f64.sqrt(), epsilon = 1e-9);
    }

    /// Independent 3x3 oracle: explicit adjugate inverse instead of the
    /// Cholesky path.
    #[test]
    fn three_point_posterior_matches_closed_form() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [1.0, 2.0, 1.5];
        let h = Hyperparams { length_scale: 1.0, signal_var: 1.0, noise_var: 0.1 };
        let q = 0.5;

        let m = (ys[0] + ys[1] + ys[2]) / 3.0;
        let k = |a: f64, b: f64| kernel(h, a, b);
        let mut km = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                km[i][j] = k(xs[i], xs[j]) + if i == j { h.noise_var } else { 0.0 };
            }
        }
        let det = km[0][0] * (km[1][1] * km[2][2] - km[1][2] * km[2][1])
            - km[0][1] * (km[1][0] * km[2][2] - km[1][2] * km[2][0])
            + km[0][2] * (km[1][0] * km[2][1] - km[1][1] * km[2][0]);
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (a, b, c, d) = (
                    km[(j + 1) % 3][(i + 1) % 3],
                    km[(j + 1) % 3][(i + 2) % 3],
                    km[(j + 2) % 3][(i + 1) % 3],
                    km[(j + 2) % 3][(i + 2) % 3],
                );
                inv[i][j] = (a * d - b * c) / det;
            }
        }
        let kstar = [k(xs[0], q), k(xs[1], q), k(xs[2], q)];
        let yc = [ys[0] - m, ys[1] - m, ys[2] - m];
        let mut expected_mean = m;
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                expected_mean += kstar[i] * inv[i][j] * yc[j];
                quad += kstar[i] * inv[i][j] * kstar[j];
            }
        }
        let expected_std = (h.signal_var + h.noise_var - quad).sqrt();

        // Three points sit below the public training minimum, so assemble
        // the model through the internal fit.
        let f = fit(&xs, &ys, h).unwrap();
        let model = GprModel {
            inputs: xs.to_vec(),
            targets: ys.to_vec(),
            hyper: h,
            prior_mean: f.prior_mean,
            chol: f.chol,
            alpha: f.alpha,
            lml: f.lml,
        };
        let (mean, std) = model.posterior(q);
        assert_relative_eq!(mean, expected_mean, epsilon = 1e-9);
        assert_relative_eq!(std, expected_std, epsilon = 1e-9);
    }

    /// Independent likelihood oracle: Gaussian elimination with partial
    /// pivoting for both the solve and the determinant.
    #[test]
    fn likelihood_matches_direct_evaluation() {
        let xs = [0.0, 0.7, 1.1, 2.4, 3.0];
        let ys = [1.0, 1.5, 1.2, 2.8, 2.6];
        let h = Hyperparams { length_scale: 0.8, signal_var: 1.5, noise_var: 0.2 };
        let n = 5;

        let m: f64 = ys.iter().sum::<f64>() / n as f64;
        let yc: Vec<f64> = ys.iter().map(|y| y - m).collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = kernel(h, xs[i], xs[j]) + if i == j { h.noise_var } else { 0.0 };
            }
        }
        let mut b = yc.clone();
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n).max_by(|p, q| a[*p][col].abs().total_cmp(&a[*q][col].abs())).unwrap();
            if pivot != col {
                a.swap(col, pivot);
                b.swap(col, pivot);
                det = -det;
            }
            det *= a[col][col];
            for row in (col + 1)..n {
                let f = a[row][col] / a[col][col];
                for j in col..n {
                    a[row][j] -= f * a[col][j];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut sum = b[i];
            for j in (i + 1)..n {
                sum -= a[i][j] * x[j];
            }
            x[i] = sum / a[i][i];
        }
        let quad: f64 = yc.iter().zip(&x).map(|(y, x)| y * x).sum();
        let expected =
            -0.5 * quad - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

        let model = GprModel::train(
            &xs.iter().copied().zip(ys).collect::<Vec<_>>(),
            Some(h),
            0,
        )
        .unwrap();
        assert_relative_eq!(model.log_marginal_likelihood(), expected, epsilon = 1e-8);
    }

    #[test]
    fn grid_search_finds_a_usable_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs: Vec<(f64, f64)> = (0..120)
            .map(|_| {
                let x = rng.gen_range(0.0..10.0);
                (x, x + rng.gen_range(-0.1..0.1))
            })
            .collect();
        let model = GprModel::train(&pairs, None, 7).unwrap();
        let h = model.hyper();
        assert!(h.length_scale > 0.0 && h.signal_var > 0.0 && h.noise_var > 0.0);
        for q in [2.0, 5.0, 8.0] {
            let (mean, _) = model.posterior(q);
            assert_relative_eq!(mean, q, epsilon = 0.5);
        }
    }

    #[test]
    fn posterior_variance_never_exceeds_the_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs: Vec<(f64, f64)> =
            (0..60).map(|_| (rng.gen_range(0.0..20.0), rng.gen_range(0.0..30.0))).collect();
        let h = Hyperparams { length_scale: 2.0, signal_var: 9.0, noise_var: 1.0 };
        let model = GprModel::train(&pairs, Some(h), 0).unwrap();
        let prior = (9.0 + 1.0_f64).sqrt();
        for _ in 0..200 {
            let (_, std) = model.posterior(rng.gen_range(-10.0..30.0));
            assert!(std <= prior + 1e-9);
            assert!(std > 0.0);
        }
    }

    #[test]
    fn draw_statistics_match_the_posterior() {
        let h = Hyperparams { length_scale: 1.0, signal_var: 1.0, noise_var: 0.25 };
        let model = GprModel::train(&line_pairs(), Some(h), 0).unwrap();
        let (mean, std) = model.posterior(2.3);
        assert!(mean > 5.0 * std, "fixture must keep clamping negligible");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| model.sample(2.3, &mut rng)).collect();
        assert!(draws.iter().all(|d| *d >= 0.0));
        let sample_mean = draws.iter().sum::<f64>() / n as f64;
        assert!((sample_mean - mean).abs() <= 4.0 * std / (n as f64).sqrt());
    }

    #[test]
    fn negative_draws_clamp_to_zero() {
        let pairs: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 0.05)).collect();
        let h = Hyperparams { length_scale: 1.0, signal_var: 1.0, noise_var: 4.0 };
        let model = GprModel::train(&pairs, Some(h), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws: Vec<f64> = (0..200).map(|_| model.sample(3.0, &mut rng)).collect();
        assert!(draws.iter().any(|d| *d == 0.0));
        assert!(draws.iter().all(|d| *d >= 0.0));
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let model = GprModel::train(&line_pairs(), Some(tight()), 0).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let da = model.sample(1.7, &mut a);
            let db = model.sample(1.7, &mut b);
            assert_eq!(da.to_bits(), db.to_bits());
        }
    }

    #[test]
    fn oversized_training_sets_are_subsampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pairs: Vec<(f64, f64)> = (0..2500)
            .map(|_| (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)))
            .collect();
        let h = Hyperparams { length_scale: 5.0, signal_var: 4.0, noise_var: 4.0 };
        let a = GprModel::train(&pairs, Some(h), 1).unwrap();
        assert_eq!(a.len(), 2000);
        let b = GprModel::train(&pairs, Some(h), 1).unwrap();
        assert_eq!(a, b);
        let c = GprModel::train(&pairs, Some(h), 2).unwrap();
        assert!(a.training_pairs().ne(c.training_pairs()));
    }

    #[test]
    fn rejects_degenerate_input() {
        let four: Vec<(f64, f64)> = (0..4).map(|k| (k as f64, 1.0)).collect();
        assert!(matches!(
            GprModel::train(&four, None, 0),
            Err(LearnError::TooFewSamples { got: 4, need: 5 })
        ));
        let bad_hyper = Hyperparams { length_scale: 0.0, signal_var: 1.0, noise_var: 1.0 };
        assert!(matches!(
            GprModel::train(&line_pairs(), Some(bad_hyper), 0),
            Err(LearnError::BadParams(_))
        ));
        let mut nan = line_pairs();
        nan[2].1 = f64::NAN;
        assert!(matches!(
            GprModel::train(&nan, None, 0),
            Err(LearnError::InvalidLabel(_))
        ));
    }

    #[test]
    fn model_json_round_trips() {
        let h = Hyperparams { length_scale: 1.0, signal_var: 2.0, noise_var: 0.3 };
        let model = GprModel::train(&line_pairs(), Some(h), 0).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let restored: GprModel = serde_json::from_str(&json).unwrap();
        for q in [0.0, 1.3, 4.0] {
            let (m0, s0) = model.posterior(q);
            let (m1, s1) = restored.posterior(q);
            assert_relative_eq!(m0, m1, epsilon = 1e-12);
            assert_relative_eq!(s0, s1, epsilon = 1e-12);
        }
    }
}
