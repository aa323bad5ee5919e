//! Joint subgradient descent over loadings, dictionary and metric weights.
//!
//! Each sample's loadings move with a personalized rate: the global rate
//! divided by how far that sample's parameters have drifted from the
//! population model (floored at `rate_floor`). The global rate decays
//! geometrically, `alpha_t = alpha0 * decay^t`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{auto_radius, neighbor_sets, precompute_cache, DistanceCache, MetricWeights};
use crate::model::{center_of_mass, Dataset, Factorization, HyperParams, Radius, TrainedModel};
use crate::objective::composite_objective;
use crate::population::{fit_population, ElasticNetConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub factorization: Factorization,
    pub phi: MetricWeights,
    pub theta_pop: Array1<f64>,
    pub iteration: usize,
    /// Global rate for the next step, `alpha0 * decay^iteration`.
    pub alpha: f64,
    pub last_value: Option<f64>,
    pub converged: bool,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Iteration index of the step (the state it started from).
    pub t: usize,
    pub alpha: f64,
    /// Composite objective at the start of the step.
    pub objective: f64,
    pub loss: f64,
    pub dmr: f64,
    pub radius: f64,
    pub mean_neighbors: f64,
    /// Sup-norm move of the center of mass during this step.
    pub com_step: f64,
    /// Sup-norm distance of the center of mass from the population model after the step.
    pub com_drift: f64,
    /// `alpha_t * (lambda + 1)`.
    pub step_bound: f64,
    /// `alpha0 * (lambda + 1) * (1 - decay^(t+1)) / (1 - decay)`.
    pub drift_bound: f64,
}

impl TraceRecord {
    pub fn step_bound_holds(&self, tol: f64) -> bool {
        self.com_step <= self.step_bound + tol
    }

    pub fn drift_bound_holds(&self, tol: f64) -> bool {
        self.com_drift <= self.drift_bound + tol
    }
}

fn sup_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Best rank-`latent` factorization of `omega` (p x n): the dictionary rows
/// are the leading left singular vectors, the loadings carry the singular
/// values.
pub fn truncated_factorization(omega: &Array2<f64>, latent: usize) -> Result<Factorization> {
    let (p, n) = omega.dim();
    if latent == 0 || latent > p.min(n) {
        return Err(Error::InvalidHyper(format!(
            "latent dimension {latent} outside 1..={}",
            p.min(n)
        )));
    }
    let m = DMatrix::from_fn(p, n, |i, j| omega[[i, j]]);
    let svd = m.svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let mut q = Array2::zeros((latent, p));
    let mut z = Array2::zeros((latent, n));
    for (row, &s) in order.iter().take(latent).enumerate() {
        let sigma = svd.singular_values[s];
        for j in 0..p {
            q[[row, j]] = u[(j, s)];
        }
        for i in 0..n {
            z[[row, i]] = sigma * v_t[(s, i)];
        }
    }
    Factorization::new(z, q)
}

/// Starts every sample at the population model plus small Gaussian noise
/// and factorizes the result. The noise is centered across samples so the
/// initial center of mass is the population model itself.
pub fn initialize(
    dataset: &Dataset,
    hyper: &HyperParams,
    theta_pop: &Array1<f64>,
    seed: u64,
) -> Result<TrainState> {
    hyper.validate()?;
    let (n, p) = (dataset.n_samples(), dataset.n_features());
    if theta_pop.len() != p {
        return Err(Error::Dimension(format!(
            "population model has {} coefficients for {p} predictors",
            theta_pop.len()
        )));
    }
    if hyper.latent_dim > p.min(n) {
        return Err(Error::InvalidHyper(format!(
            "latent_dim {} exceeds min(p, n) = {}",
            hyper.latent_dim,
            p.min(n)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = Array2::<f64>::from_shape_simple_fn((p, n), || StandardNormal.sample(&mut rng));
    if n > 1 {
        for mut row in noise.rows_mut() {
            let mean = row.sum() / n as f64;
            row -= mean;
        }
    }
    let mut omega = noise * hyper.init_noise;
    for mut col in omega.columns_mut() {
        col += theta_pop;
    }
    let factorization = truncated_factorization(&omega, hyper.latent_dim)?;
    Ok(TrainState {
        factorization,
        phi: MetricWeights::ones(dataset.covariates().n_cols()),
        theta_pop: theta_pop.clone(),
        iteration: 0,
        alpha: hyper.alpha0,
        last_value: None,
        converged: false,
    })
}

/// Radius in effect for loadings `z`.
pub fn current_radius(z: &Array2<f64>, radius: Radius) -> Result<f64> {
    match radius {
        Radius::Fixed(r) => Ok(r),
        Radius::Auto(target) if z.ncols() >= 2 => auto_radius(z, target),
        // a single sample has no pairs; any positive radius gives the empty ball
        Radius::Auto(_) => Ok(1.0),
    }
}

impl TrainState {
    /// One Jacobi-style step: every block moves using gradients taken at the
    /// state the step started from.
    pub fn step(
        &self,
        dataset: &Dataset,
        cache: &DistanceCache,
        hyper: &HyperParams,
    ) -> Result<(TrainState, TraceRecord)> {
        let z = self.factorization.loadings();
        let q = self.factorization.dictionary();
        let n = z.ncols();
        let radius = current_radius(z, hyper.radius)?;
        let neighbors = neighbor_sets(z, radius)?;
        let bundle = composite_objective(z, q, &self.phi, dataset, cache, &neighbors, hyper)?;
        let alpha = self.alpha;

        let phi = MetricWeights::projected(self.phi.as_array() - &(&bundle.grad_phi * alpha));

        let mut z_next = z.clone();
        for i in 0..n {
            let theta = self.factorization.theta(i);
            let dev = sup_norm(&(&theta - &self.theta_pop));
            let rate = alpha / dev.max(hyper.rate_floor);
            let mut col = z_next.column_mut(i);
            col.scaled_add(-rate, &bundle.grad_z.column(i));
        }
        let q_next = q - &(&bundle.grad_q * alpha);

        if z_next.iter().chain(q_next.iter()).chain(phi.as_array().iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteUpdate(self.iteration));
        }
        let factorization = Factorization::new(z_next, q_next)?;

        let com_before = center_of_mass(&self.factorization);
        let com_after = center_of_mass(&factorization);
        let mean_neighbors = neighbors.iter().map(Vec::len).sum::<usize>() as f64 / n as f64;
        let t = self.iteration;
        let scale = hyper.lambda + 1.0;
        let record = TraceRecord {
            t,
            alpha,
            objective: bundle.value,
            loss: bundle.loss,
            dmr: bundle.dmr,
            radius,
            mean_neighbors,
            com_step: sup_norm(&(&com_after - &com_before)),
            com_drift: sup_norm(&(&com_after - &self.theta_pop)),
            step_bound: alpha * scale,
            drift_bound: hyper.alpha0 * scale * (1.0 - hyper.decay.powi(t as i32 + 1))
                / (1.0 - hyper.decay),
        };

        let next = TrainState {
            factorization,
            phi,
            theta_pop: self.theta_pop.clone(),
            iteration: t + 1,
            alpha: hyper.alpha0 * hyper.decay.powi(t as i32 + 1),
            last_value: Some(bundle.value),
            converged: false,
        };
        Ok((next, record))
    }
}

/// Free-function form of [`TrainState::step`].
pub fn train_step(
    state: &TrainState,
    dataset: &Dataset,
    cache: &DistanceCache,
    hyper: &HyperParams,
) -> Result<TrainState> {
    state.step(dataset, cache, hyper).map(|(s, _)| s)
}

/// Runs steps until the relative change of the objective falls under
/// `rel_tol` or `max_iters` steps have been taken.
pub fn run(
    mut state: TrainState,
    dataset: &Dataset,
    cache: &DistanceCache,
    hyper: &HyperParams,
    mut observer: impl FnMut(&TraceRecord),
) -> Result<TrainState> {
    while state.iteration < hyper.max_iters {
        let prev = state.last_value;
        let (next, record) = state.step(dataset, cache, hyper)?;
        observer(&record);
        state = next;
        if let Some(prev) = prev {
            if (record.objective - prev).abs() <= hyper.rel_tol * prev.abs().max(1.0) {
                state.converged = true;
                break;
            }
        }
    }
    Ok(state)
}

/// Fits the population model, initializes around it and trains.
pub fn fit(dataset: &Dataset, hyper: &HyperParams, seed: u64) -> Result<TrainedModel> {
    fit_traced(dataset, hyper, seed, |_| {})
}

pub fn fit_traced(
    dataset: &Dataset,
    hyper: &HyperParams,
    seed: u64,
    observer: impl FnMut(&TraceRecord),
) -> Result<TrainedModel> {
    hyper.validate()?;
    let theta_pop = fit_population(dataset, &ElasticNetConfig::from_lambda(hyper.lambda))?;
    fit_from_population(dataset, hyper, theta_pop, seed, observer)
}

/// Trains around a caller-supplied population model.
pub fn fit_from_population(
    dataset: &Dataset,
    hyper: &HyperParams,
    theta_pop: Array1<f64>,
    seed: u64,
    observer: impl FnMut(&TraceRecord),
) -> Result<TrainedModel> {
    let metrics = dataset.covariates().schema();
    let cache = precompute_cache(dataset, &metrics)?;
    let state = initialize(dataset, hyper, &theta_pop, seed)?;
    let state = run(state, dataset, &cache, hyper, observer)?;
    TrainedModel::new(
        state.factorization,
        state.phi,
        theta_pop,
        dataset.covariates().clone(),
        metrics,
        dataset.task(),
        hyper.clone(),
    )
}
