//! Elastic-net population model, fit by proximal gradient descent.
//!
//! Used both as the anchor the personalized models start from and as the
//! baseline they are compared against.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Task};
use crate::objective::{loss_subgradient, predictive_loss, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetConfig {
    pub l1: f64,
    pub l2: f64,
    pub max_iters: usize,
    /// Stop once the first-order optimality residual (sup-norm) drops below this.
    pub rel_tol: f64,
}

impl ElasticNetConfig {
    /// l1 equal to the personalized `lambda`, with a small ridge term.
    pub fn from_lambda(lambda: f64) -> Self {
        Self {
            l1: lambda,
            l2: 1e-4 * lambda,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.l1 >= 0.0 && self.l2 >= 0.0 && self.l1.is_finite() && self.l2.is_finite()) {
            return Err(Error::InvalidHyper(format!(
                "elastic net penalties must be >= 0 (l1 = {}, l2 = {})",
                self.l1, self.l2
            )));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidHyper("elastic net rel_tol must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for ElasticNetConfig {
    fn default() -> Self {
        Self {
            l1: 1e-1,
            l2: 1e-5,
            max_iters: 100_000,
            rel_tol: 1e-9,
        }
    }
}

fn smooth_value(dataset: &Dataset, theta: &Array1<f64>, l2: f64) -> Result<f64> {
    let n = dataset.n_samples();
    let mut acc = 0.0;
    for i in 0..n {
        acc += predictive_loss(dataset.x().row(i), dataset.y()[i], theta.view(), dataset.task())?;
    }
    Ok(acc / n as f64 + l2 * theta.dot(theta))
}

fn smooth_gradient(dataset: &Dataset, theta: &Array1<f64>, l2: f64) -> Result<Array1<f64>> {
    let n = dataset.n_samples();
    let mut g = Array1::zeros(theta.len());
    for i in 0..n {
        g += &loss_subgradient(dataset.x().row(i), dataset.y()[i], theta.view(), dataset.task())?;
    }
    Ok(g / n as f64 + &(theta * (2.0 * l2)))
}

/// Mean loss plus `l1 |theta|_1 + l2 |theta|_2^2`.
pub fn population_objective(dataset: &Dataset, theta: &Array1<f64>, cfg: &ElasticNetConfig) -> Result<f64> {
    Ok(smooth_value(dataset, theta, cfg.l2)? + cfg.l1 * theta.iter().map(|v| v.abs()).sum::<f64>())
}

/// Gradient of the smooth part plus the l1 subgradient `l1 * sign(theta)`
/// (zero at zero coordinates).
pub fn population_gradient(dataset: &Dataset, theta: &Array1<f64>, cfg: &ElasticNetConfig) -> Result<Array1<f64>> {
    let g = smooth_gradient(dataset, theta, cfg.l2)?;
    Ok(g + &theta.mapv(|v| if v == 0.0 { 0.0 } else { cfg.l1 * v.signum() }))
}

/// Distance from zero to the subdifferential of the elastic-net objective,
/// in the sup norm.
pub fn stationarity_residual(dataset: &Dataset, theta: &Array1<f64>, cfg: &ElasticNetConfig) -> Result<f64> {
    let g = smooth_gradient(dataset, theta, cfg.l2)?;
    Ok(g.iter()
        .zip(theta.iter())
        .map(|(&gj, &tj)| {
            if tj != 0.0 {
                (gj + cfg.l1 * tj.signum()).abs()
            } else {
                (gj.abs() - cfg.l1).max(0.0)
            }
        })
        .fold(0.0, f64::max))
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Fits the population model starting from zero. Steps are chosen by
/// halving backtracking, never below the reciprocal of a Lipschitz bound,
/// so the objective never increases.
pub fn fit_population(dataset: &Dataset, cfg: &ElasticNetConfig) -> Result<Array1<f64>> {
    fit_population_traced(dataset, cfg, |_| {})
}

/// As [`fit_population`], reporting the objective after every accepted step.
pub fn fit_population_traced(
    dataset: &Dataset,
    cfg: &ElasticNetConfig,
    mut on_step: impl FnMut(f64),
) -> Result<Array1<f64>> {
    cfg.validate()?;
    let p = dataset.n_features();
    let mut theta = Array1::<f64>::zeros(p);
    // 1 / L for an upper bound L on the Lipschitz constant of the smooth
    // gradient; sufficient decrease holds analytically at or below this step
    let curvature = match dataset.task() {
        Task::Regression => 2.0,
        Task::Classification => 0.25,
    };
    let frob2 = dataset.x().iter().map(|v| v * v).sum::<f64>();
    let lipschitz = curvature * frob2 / dataset.n_samples() as f64 + 2.0 * cfg.l2;
    let safe_step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };
    let mut step = safe_step;
    let mut residual = stationarity_residual(dataset, &theta, cfg)?;
    let mut f = smooth_value(dataset, &theta, cfg.l2)?;
    for _ in 0..cfg.max_iters {
        if residual <= cfg.rel_tol {
            return Ok(theta);
        }
        let g = smooth_gradient(dataset, &theta, cfg.l2)?;
        let mut accepted = false;
        // allow the step to grow back after earlier backtracking
        step *= 2.0;
        for _ in 0..200 {
            let cand = Array1::from_shape_fn(p, |j| {
                soft_threshold(theta[j] - step * g[j], step * cfg.l1)
            });
            let diff = &cand - &theta;
            let f_cand = smooth_value(dataset, &cand, cfg.l2)?;
            let bound = f + g.dot(&diff) + diff.dot(&diff) / (2.0 * step);
            if f_cand <= bound || step <= safe_step {
                theta = cand;
                f = f_cand;
                accepted = true;
                break;
            }
            step = (step * 0.5).max(safe_step);
        }
        if !accepted {
            break;
        }
        on_step(f + cfg.l1 * theta.iter().map(|v| v.abs()).sum::<f64>());
        residual = stationarity_residual(dataset, &theta, cfg)?;
    }
    if residual <= cfg.rel_tol {
        return Ok(theta);
    }
    Err(Error::NotConverged {
        iters: cfg.max_iters,
        residual,
        last: theta.to_vec(),
    })
}

/// `<x, theta>` for regression, its sigmoid for classification.
pub fn predict_population(theta: ArrayView1<f64>, x: ArrayView1<f64>, task: Task) -> Result<f64> {
    if theta.len() != x.len() {
        return Err(Error::Dimension(format!(
            "{} coefficients for {} predictors",
            theta.len(),
            x.len()
        )));
    }
    let t = x.dot(&theta);
    Ok(match task {
        Task::Regression => t,
        Task::Classification => sigmoid(t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Covariates;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    fn dataset(x: Array2<f64>, y: Array1<f64>, task: Task) -> Dataset {
        let n = x.nrows();
        let u = Covariates::from_continuous(&Array2::zeros((n, 1))).unwrap();
        Dataset::new(x, y, u, task).unwrap()
    }

    fn cfg(l1: f64, l2: f64) -> ElasticNetConfig {
        ElasticNetConfig {
            l1,
            l2,
            max_iters: 100_000,
            rel_tol: 1e-10,
        }
    }

    #[test]
    fn exact_linear_fit() {
        let x = array![[1.0], [-0.5], [2.0], [0.3]];
        let y = x.column(0).mapv(|v| 2.0 * v);
        let theta = fit_population(&dataset(x, y, Task::Regression), &cfg(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(theta[0], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        // X^T X / n = I/2 per column pair below; mean loss (y - x.theta)^2 has
        // minimizer 1.0 and curvature 2 * (1/n) * sum x^2 = 1, so the l1 step
        // is a soft threshold by l1 / 1.
        let x = array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let y = array![1.0, 1.0, -1.0, -1.0];
        let d = dataset(x, y, Task::Regression);
        let theta = fit_population(&d, &cfg(0.3, 0.0)).unwrap();
        assert_abs_diff_eq!(theta[0], 0.7, epsilon = 1e-9);
        assert_abs_diff_eq!(theta[1], 0.7, epsilon = 1e-9);
    }

    #[test]
    fn huge_l1_zeroes_everything() {
        let x = array![[1.0, 2.0], [0.5, -1.0], [2.0, 0.1]];
        let y = array![1.0, -2.0, 3.0];
        let theta = fit_population(&dataset(x, y, Task::Regression), &cfg(1e6, 0.0)).unwrap();
        assert_eq!(theta, array![0.0, 0.0]);
    }

    #[test]
    fn logistic_fit_is_stationary() {
        let x = array![[1.0, 0.2], [-1.0, 0.5], [0.5, -0.3], [-0.2, 1.0], [0.9, 0.9]];
        let y = array![1.0, 0.0, 1.0, 0.0, 0.0];
        let d = dataset(x, y, Task::Classification);
        let c = cfg(0.01, 0.001);
        let theta = fit_population(&d, &c).unwrap();
        assert!(stationarity_residual(&d, &theta, &c).unwrap() <= 1e-10);
    }

    #[test]
    fn non_convergence_reports_last_iterate() {
        let x = array![[1.0, 2.0], [0.5, -1.0], [2.0, 0.1]];
        let y = array![1.0, -2.0, 3.0];
        let c = ElasticNetConfig {
            max_iters: 1,
            ..cfg(0.01, 0.0)
        };
        match fit_population(&dataset(x, y, Task::Regression), &c) {
            Err(Error::NotConverged { last, residual, .. }) => {
                assert_eq!(last.len(), 2);
                assert!(residual > 0.0);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn objective_never_increases() {
        let x = array![[1.0, 2.0], [0.5, -1.0], [2.0, 0.1], [-0.3, 0.4]];
        let y = array![1.0, -2.0, 3.0, 0.2];
        let mut values = Vec::new();
        fit_population_traced(&dataset(x, y, Task::Regression), &cfg(0.05, 0.01), |v| {
            values.push(v)
        })
        .unwrap();
        assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-14));
    }

    #[test]
    fn prediction_examples() {
        let zero = array![0.0, 0.0];
        let x = array![2.0, 1.0];
        assert_eq!(predict_population(zero.view(), x.view(), Task::Regression).unwrap(), 0.0);
        assert_eq!(predict_population(zero.view(), x.view(), Task::Classification).unwrap(), 0.5);
        let theta = array![1.0, -1.0];
        assert_eq!(predict_population(theta.view(), x.view(), Task::Regression).unwrap(), 1.0);
        assert_eq!(
            predict_population(theta.view(), zero.view(), Task::Classification).unwrap(),
            0.5
        );
        assert!(predict_population(theta.view(), array![1.0].view(), Task::Regression).is_err());
    }
}
