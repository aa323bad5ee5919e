//! Loss and regularizer values with their (sub)gradients.
//!
//! Gradients are closed-form. The distance-matching terms are summed over
//! ordered pairs `(i, j)` with `j` in the ball of `i`, visited in ascending
//! order, so the result does not depend on how the balls were found.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::metric::{sq_dist, DistanceCache, MetricWeights};
use crate::model::{Dataset, HyperParams, Task};

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn check_label(y: f64, task: Task) -> Result<()> {
    if task == Task::Classification && y != 0.0 && y != 1.0 {
        return Err(Error::InvalidLabel(y));
    }
    Ok(())
}

/// Squared error for regression, logistic loss with labels in {0, 1} for
/// classification.
pub fn predictive_loss(x: ArrayView1<f64>, y: f64, theta: ArrayView1<f64>, task: Task) -> Result<f64> {
    check_label(y, task)?;
    let t = x.dot(&theta);
    Ok(match task {
        Task::Regression => (y - t) * (y - t),
        Task::Classification => softplus(t) - y * t,
    })
}

pub fn loss_subgradient(
    x: ArrayView1<f64>,
    y: f64,
    theta: ArrayView1<f64>,
    task: Task,
) -> Result<Array1<f64>> {
    check_label(y, task)?;
    let t = x.dot(&theta);
    let scale = match task {
        Task::Regression => -2.0 * (y - t),
        Task::Classification => sigmoid(t) - y,
    };
    Ok(x.mapv(|v| scale * v))
}

/// `lambda * |theta|_1` and the subgradient `lambda * sign(theta)`, which is
/// exactly zero at zero coordinates.
pub fn l1_term(theta: ArrayView1<f64>, lambda: f64) -> (f64, Array1<f64>) {
    let value = lambda * theta.iter().map(|v| v.abs()).sum::<f64>();
    let sub = theta.mapv(|v| {
        if v > 0.0 {
            lambda
        } else if v < 0.0 {
            -lambda
        } else {
            0.0
        }
    });
    (value, sub)
}

/// Per-sample distance-matching penalty
/// `(gamma / 2) * sum_{j in B(i)} (rho_ij - |z_i - z_j|^2)^2`.
pub fn dmr_value(
    z: &Array2<f64>,
    phi: &MetricWeights,
    cache: &DistanceCache,
    neighbors: &[Vec<usize>],
    gamma: f64,
) -> Array1<f64> {
    let n = z.ncols();
    let mut out = Array1::zeros(n);
    for i in 0..n {
        let mut acc = 0.0;
        for &j in &neighbors[i] {
            let e = cache.rho(phi, i, j) - sq_dist(z, i, j);
            acc += e * e;
        }
        out[i] = 0.5 * gamma * acc;
    }
    out
}

/// Gradients of `sum_i D^(i)` with respect to the loadings (q x n) and the
/// metric weights (k).
pub fn dmr_gradients(
    z: &Array2<f64>,
    phi: &MetricWeights,
    cache: &DistanceCache,
    neighbors: &[Vec<usize>],
    gamma: f64,
) -> (Array2<f64>, Array1<f64>) {
    let (q, n) = z.dim();
    let k = cache.n_covariates();
    let mut grad_z = Array2::zeros((q, n));
    let mut grad_phi = Array1::zeros(k);
    if gamma == 0.0 {
        return (grad_z, grad_phi);
    }
    for i in 0..n {
        for &j in &neighbors[i] {
            let e = cache.rho(phi, i, j) - sq_dist(z, i, j);
            // d/dz_i of (gamma/2) e^2 is -2 gamma e (z_i - z_j); z_j gets the negation
            let s = -2.0 * gamma * e;
            for d in 0..q {
                let v = s * (z[[d, i]] - z[[d, j]]);
                grad_z[[d, i]] += v;
                grad_z[[d, j]] -= v;
            }
            let pair = cache.pair(i, j);
            for l in 0..k {
                grad_phi[l] += gamma * e * pair[l];
            }
        }
    }
    (grad_z, grad_phi)
}

/// Composite objective value and its partial (sub)gradients.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub value: f64,
    /// Sum of predictive losses.
    pub loss: f64,
    /// Sum of l1 penalties.
    pub penalty: f64,
    /// Sum of distance-matching penalties.
    pub dmr: f64,
    pub grad_z: Array2<f64>,
    pub grad_q: Array2<f64>,
    pub grad_phi: Array1<f64>,
}

/// Evaluates the full objective at `(z, q, phi)` with the given neighbor
/// balls. The distance-matching term does not depend on the dictionary, so
/// it contributes nothing to `grad_q`.
pub fn composite_objective(
    z: &Array2<f64>,
    q: &Array2<f64>,
    phi: &MetricWeights,
    dataset: &Dataset,
    cache: &DistanceCache,
    neighbors: &[Vec<usize>],
    hyper: &HyperParams,
) -> Result<GradientBundle> {
    let (latent, n) = z.dim();
    let p = q.ncols();
    if q.nrows() != latent || dataset.n_samples() != n || dataset.n_features() != p {
        return Err(Error::Dimension(format!(
            "loadings {latent}x{n}, dictionary {}x{p}, data {}x{}",
            q.nrows(),
            dataset.n_samples(),
            dataset.n_features()
        )));
    }
    if cache.n_samples() != n || phi.len() != cache.n_covariates() || neighbors.len() != n {
        return Err(Error::Dimension(
            "cache, metric weights and neighbor sets disagree with the loadings".into(),
        ));
    }

    let task = dataset.task();
    let mut grad_q = Array2::<f64>::zeros((latent, p));
    let mut grad_z = Array2::<f64>::zeros((latent, n));
    let mut loss = 0.0;
    let mut penalty = 0.0;
    for i in 0..n {
        let zi = z.column(i);
        let theta = q.t().dot(&zi);
        let x = dataset.x().row(i);
        let y = dataset.y()[i];
        let li = predictive_loss(x, y, theta.view(), task)?;
        let (pi, psi) = l1_term(theta.view(), hyper.lambda);
        let g = loss_subgradient(x, y, theta.view(), task)? + psi;
        if !(li.is_finite() && g.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFiniteSample(i));
        }
        loss += li;
        penalty += pi;
        grad_z.column_mut(i).assign(&q.dot(&g));
        let zi_col = zi.insert_axis(Axis(1));
        let g_row = g.view().insert_axis(Axis(0));
        grad_q += &zi_col.dot(&g_row);
    }

    let dmr_per = dmr_value(z, phi, cache, neighbors, hyper.gamma);
    let dmr = dmr_per.sum();
    let (dz, dphi) = dmr_gradients(z, phi, cache, neighbors, hyper.gamma);
    grad_z += &dz;
    let centered = phi.as_array() - 1.0;
    let phi_reg = hyper.upsilon * centered.dot(&centered);
    let grad_phi = dphi + &(centered * (2.0 * hyper.upsilon));

    let value = loss + penalty + dmr + phi_reg;
    if !value.is_finite() {
        return Err(Error::NonFiniteSample(
            dmr_per.iter().position(|v| !v.is_finite()).unwrap_or(0),
        ));
    }
    Ok(GradientBundle {
        value,
        loss,
        penalty,
        dmr,
        grad_z,
        grad_q,
        grad_phi,
    })
}
