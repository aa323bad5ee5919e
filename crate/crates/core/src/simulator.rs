//! Synthetic data with known per-sample parameters, and the metrics used to
//! score recovery and prediction.
//!
//! Each coefficient is driven by one covariate through a step plus a sine:
//! `theta_j = 1{u_{c_j} > a_j} + b_j sin(u_{c_j})`.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::model::{Covariates, Dataset, Task};

pub const NOISE_STD: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub dataset: Dataset,
    /// Ground-truth parameters, one column per sample (p x n).
    pub omega_true: Array2<f64>,
    pub thresholds: Array1<f64>,
    pub amplitudes: Array1<f64>,
    /// Zero-based covariate driving each coefficient.
    pub drivers: Vec<usize>,
    pub noise: Array1<f64>,
    pub seed: u64,
}

/// Ground-truth coefficient for a driving covariate value `u`.
pub fn true_coefficient(u: f64, threshold: f64, amplitude: f64) -> f64 {
    let step = if u > threshold { 1.0 } else { 0.0 };
    step + amplitude * u.sin()
}

pub fn generate(n: usize, p: usize, k: usize, seed: u64) -> Result<SyntheticInstance> {
    if n == 0 || p == 0 || k == 0 {
        return Err(Error::InvalidData(format!(
            "simulation sizes must be >= 1 (n={n}, p={p}, k={k})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sym = Uniform::new(-1.0, 1.0).expect("valid range");
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let x = Array2::from_shape_simple_fn((n, p), || sym.sample(&mut rng));
    let u = Array2::from_shape_simple_fn((n, k), || unit.sample(&mut rng));
    let thresholds = Array1::from_shape_simple_fn(p, || unit.sample(&mut rng));
    let amplitudes = Array1::from_shape_simple_fn(p, || unit.sample(&mut rng));
    let drivers: Vec<usize> = (0..p).map(|_| rng.random_range(0..k)).collect();
    let normal = Normal::new(0.0, NOISE_STD).expect("valid std");
    let noise = Array1::from_shape_simple_fn(n, || normal.sample(&mut rng));

    let omega_true = Array2::from_shape_fn((p, n), |(j, i)| {
        true_coefficient(u[[i, drivers[j]]], thresholds[j], amplitudes[j])
    });
    let y = responses(&x, &omega_true, &noise);
    let dataset = Dataset::new(x, y, Covariates::from_continuous(&u)?, Task::Regression)?;
    Ok(SyntheticInstance {
        dataset,
        omega_true,
        thresholds,
        amplitudes,
        drivers,
        noise,
        seed,
    })
}

fn responses(x: &Array2<f64>, omega: &Array2<f64>, noise: &Array1<f64>) -> Array1<f64> {
    Array1::from_shape_fn(x.nrows(), |i| x.row(i).dot(&omega.column(i)) + noise[i])
}

impl SyntheticInstance {
    /// Rescales every predictor row to unit l1 norm and regenerates the
    /// responses with the same parameters and noise.
    pub fn with_l1_normalized_rows(&self) -> Result<Self> {
        let mut x = self.dataset.x().clone();
        for mut row in x.axis_iter_mut(Axis(0)) {
            let norm: f64 = row.iter().map(|v| v.abs()).sum();
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
            }
        }
        let y = responses(&x, &self.omega_true, &self.noise);
        let dataset = Dataset::new(x, y, self.dataset.covariates().clone(), Task::Regression)?;
        Ok(Self {
            dataset,
            ..self.clone()
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            dataset: self.dataset.select_rows(rows),
            omega_true: self.omega_true.select(Axis(1), rows),
            noise: self.noise.select(Axis(0), rows),
            ..self.clone()
        }
    }
}

/// Deterministic 80/20 split of `0..n` by seeded shuffle; both parts sorted.
pub fn train_test_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5917_7e57);
    idx.shuffle(&mut rng);
    let n_train = (n * 4).div_ceil(5);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Frobenius norm of the difference.
pub fn recovery_error(omega_hat: &Array2<f64>, omega_true: &Array2<f64>) -> Result<f64> {
    if omega_hat.dim() != omega_true.dim() {
        return Err(Error::Dimension(format!(
            "estimate is {:?}, truth is {:?}",
            omega_hat.dim(),
            omega_true.dim()
        )));
    }
    Ok((omega_hat - omega_true).mapv(|v| v * v).sum().sqrt())
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} targets",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidData("no predictions to score".into()));
    }
    Ok(())
}

pub fn mse(y_pred: &[f64], y_true: &[f64]) -> Result<f64> {
    check_lengths(y_pred, y_true)?;
    Ok(y_pred
        .iter()
        .zip(y_true)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y_pred.len() as f64)
}

/// Squared Pearson correlation. Returns `(0.0, true)` when either side is
/// constant.
pub fn r_squared(y_pred: &[f64], y_true: &[f64]) -> Result<(f64, bool)> {
    check_lengths(y_pred, y_true)?;
    let n = y_pred.len() as f64;
    let mp = y_pred.iter().sum::<f64>() / n;
    let mt = y_true.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y_pred.iter().zip(y_true) {
        sxy += (a - mp) * (b - mt);
        sxx += (a - mp) * (a - mp);
        syy += (b - mt) * (b - mt);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok((0.0, true));
    }
    Ok((sxy * sxy / (sxx * syy), false))
}

/// Area under the ROC curve via the rank-sum statistic, with tied scores
/// sharing their average rank.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(scores, labels)?;
    if let Some(&bad) = labels.iter().find(|&&l| l != 0.0 && l != 1.0) {
        return Err(Error::InvalidLabel(bad));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidData("AUROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks are 1-based; the tie block start..end shares the mean rank
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean_rank;
        }
        start = end;
    }
    let pos_rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1.0)
        .map(|(r, _)| r)
        .sum();
    let np = n_pos as f64;
    Ok((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Fraction of labels matched when thresholding scores at 0.5.
pub fn accuracy(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s >= 0.5) == (l == 1.0))
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub recovery: f64,
    pub r2: f64,
    pub mse: f64,
    /// Set when a constant input forced `r2` to zero.
    pub r2_degenerate: bool,
}

pub fn evaluate_recovery(
    omega_hat: &Array2<f64>,
    omega_true: &Array2<f64>,
    y_pred: &[f64],
    y_true: &[f64],
) -> Result<Evaluation> {
    let recovery = recovery_error(omega_hat, omega_true)?;
    let (r2, r2_degenerate) = r_squared(y_pred, y_true)?;
    Ok(Evaluation {
        recovery,
        r2,
        mse: mse(y_pred, y_true)?,
        r2_degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn coefficient_formula_cases() {
        assert_eq!(true_coefficient(0.0, 0.5, 0.37), 0.0);
        assert_eq!(true_coefficient(1.0, 0.5, 0.0), 1.0);
        assert_abs_diff_eq!(true_coefficient(0.9, 0.5, 0.5), 1.0 + 0.5 * 0.9f64.sin());
    }

    #[test]
    fn same_seed_same_instance() {
        let a = generate(30, 3, 4, 11).unwrap();
        let b = generate(30, 3, 4, 11).unwrap();
        assert_eq!(a.dataset.x(), b.dataset.x());
        assert_eq!(a.dataset.y(), b.dataset.y());
        assert_eq!(a.omega_true, b.omega_true);
        assert_eq!(a.drivers, b.drivers);
        let c = generate(30, 3, 4, 12).unwrap();
        assert_ne!(a.dataset.y(), c.dataset.y());
    }

    #[test]
    fn coefficients_in_range_and_noise_free_fit_exact() {
        let inst = generate(200, 4, 5, 3).unwrap();
        let hi = 1.0 + 1f64.sin();
        assert!(inst.omega_true.iter().all(|&t| (0.0..=hi).contains(&t)));
        for i in 0..200 {
            let clean = inst.dataset.x().row(i).dot(&inst.omega_true.column(i));
            assert_eq!(clean + inst.noise[i], inst.dataset.y()[i]);
        }
        assert!(inst.drivers.iter().all(|&c| c < 5));
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(generate(0, 2, 5, 1).is_err());
        assert!(generate(10, 0, 5, 1).is_err());
        assert!(generate(10, 2, 0, 1).is_err());
    }

    #[test]
    fn normalized_rows() {
        let inst = generate(50, 3, 2, 5).unwrap().with_l1_normalized_rows().unwrap();
        for row in inst.dataset.x().rows() {
            assert_abs_diff_eq!(row.iter().map(|v| v.abs()).sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(row.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn split_is_80_20_and_disjoint() {
        let (train, test) = train_test_split(100, 9);
        assert_eq!((train.len(), test.len()), (80, 20));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(train_test_split(100, 9), (train, test));
    }

    #[test]
    fn recovery_examples() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(recovery_error(&a, &a).unwrap(), 0.0);
        assert_eq!(recovery_error(&(&a + 1.0), &a).unwrap(), 2.0);
        assert!(recovery_error(&a, &array![[1.0, 2.0]]).is_err());
    }

    #[test]
    fn perfect_predictions() {
        let y = [0.3, -1.0, 2.0, 0.7];
        let ev = evaluate_recovery(&array![[0.0]], &array![[0.0]], &y, &y).unwrap();
        assert_abs_diff_eq!(ev.r2, 1.0, epsilon = 1e-15);
        assert_eq!(ev.mse, 0.0);
        assert!(!ev.r2_degenerate);
    }

    #[test]
    fn constant_predictions_flagged() {
        let (r2, flag) = r_squared(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(r2, 0.0);
        assert!(flag);
    }

    #[test]
    fn auroc_cases() {
        assert_eq!(auroc(&[0.5; 4], &[0.0, 1.0, 0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(
            auroc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap(),
            0.75
        );
        assert!(auroc(&[0.1, 0.2], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn auroc_matches_pair_count() {
        let scores = [0.2, 0.9, 0.4, 0.4, 0.7, 0.1, 0.4];
        let labels = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (s, l) in scores.iter().zip(labels) {
            for (s2, l2) in scores.iter().zip(labels) {
                if l == 1.0 && l2 == 0.0 {
                    pairs += 1.0;
                    wins += if s > s2 { 1.0 } else if s == s2 { 0.5 } else { 0.0 };
                }
            }
        }
        assert_abs_diff_eq!(auroc(&scores, &labels).unwrap(), wins / pairs, epsilon = 1e-15);
    }

    #[test]
    fn accuracy_threshold() {
        assert_eq!(accuracy(&[0.2, 0.6, 0.5, 0.4], &[0.0, 1.0, 0.0, 0.0]).unwrap(), 0.75);
    }
}
