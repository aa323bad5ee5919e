//! Shared data model: datasets, the low-rank factorization of the
//! per-sample parameter matrix, hyperparameters and the trained model.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{FeatureMetric, MetricWeights};

/// Whether responses are real-valued or binary labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

/// One covariate column. Continuous columns are compared by absolute
/// difference, categorical ones by the discrete metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "values")]
pub enum CovariateColumn {
    Continuous(Vec<f64>),
    Categorical(Vec<String>),
}

impl CovariateColumn {
    pub fn len(&self) -> usize {
        match self {
            CovariateColumn::Continuous(v) => v.len(),
            CovariateColumn::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, row: usize) -> CovariateValue<'_> {
        match self {
            CovariateColumn::Continuous(v) => CovariateValue::Continuous(v[row]),
            CovariateColumn::Categorical(v) => CovariateValue::Categorical(&v[row]),
        }
    }

    /// The metric matching this column's type.
    pub fn natural_metric(&self) -> FeatureMetric {
        match self {
            CovariateColumn::Continuous(_) => FeatureMetric::AbsoluteDifference,
            CovariateColumn::Categorical(_) => FeatureMetric::Discrete,
        }
    }
}

/// A single covariate value, borrowed from a table or a test row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateValue<'a> {
    Continuous(f64),
    Categorical(&'a str),
}

/// Column-major covariate table (`n` rows, `k` columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    columns: Vec<CovariateColumn>,
}

impl Covariates {
    pub fn new(columns: Vec<CovariateColumn>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidData("covariate table has no columns".into()));
        }
        let n = columns[0].len();
        if let Some(bad) = columns.iter().position(|c| c.len() != n) {
            return Err(Error::Dimension(format!(
                "covariate column {bad} has {} rows, expected {n}",
                columns[bad].len()
            )));
        }
        Ok(Self { columns })
    }

    /// Builds an all-continuous table from an `n x k` matrix.
    pub fn from_continuous(u: &Array2<f64>) -> Result<Self> {
        Self::new(
            u.axis_iter(Axis(1))
                .map(|c| CovariateColumn::Continuous(c.to_vec()))
                .collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[CovariateColumn] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> Vec<CovariateValue<'_>> {
        self.columns.iter().map(|c| c.value(i)).collect()
    }

    pub fn schema(&self) -> Vec<FeatureMetric> {
        self.columns.iter().map(CovariateColumn::natural_metric).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                CovariateColumn::Continuous(v) => {
                    CovariateColumn::Continuous(rows.iter().map(|&r| v[r]).collect())
                }
                CovariateColumn::Categorical(v) => {
                    CovariateColumn::Categorical(rows.iter().map(|&r| v[r].clone()).collect())
                }
            })
            .collect();
        Self { columns }
    }
}

/// Predictors `x` (n x p), responses `y` (n) and covariates `u` (n x k).
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    u: Covariates,
    task: Task,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, u: Covariates, task: Task) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 || p == 0 {
            return Err(Error::InvalidData(format!("predictor matrix is {n}x{p}")));
        }
        if y.len() != n {
            return Err(Error::Dimension(format!("{} responses for {n} rows", y.len())));
        }
        if u.n_rows() != n {
            return Err(Error::Dimension(format!(
                "{} covariate rows for {n} rows",
                u.n_rows()
            )));
        }
        if let Some(((i, j), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite predictor at ({i}, {j})")));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite response at row {i}")));
        }
        if task == Task::Classification {
            if let Some(&bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidLabel(bad));
            }
        }
        Ok(Self { x, y, u, task })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn covariates(&self) -> &Covariates {
        &self.u
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            u: self.u.select_rows(rows),
            task: self.task,
        }
    }
}

/// Loadings `z` (q x n) and dictionary `q` (q x p); the parameter matrix is
/// always derived as `qᵀ z`, never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    z: Array2<f64>,
    q: Array2<f64>,
}

impl Factorization {
    pub fn new(z: Array2<f64>, q: Array2<f64>) -> Result<Self> {
        if z.nrows() != q.nrows() {
            return Err(Error::Dimension(format!(
                "loadings have {} rows but dictionary has {}",
                z.nrows(),
                q.nrows()
            )));
        }
        let latent = z.nrows();
        let (n, p) = (z.ncols(), q.ncols());
        if latent == 0 || latent > n.min(p) {
            return Err(Error::Dimension(format!(
                "latent dimension {latent} outside 1..={} (n={n}, p={p})",
                n.min(p)
            )));
        }
        if z.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite factorization entry".into()));
        }
        Ok(Self { z, q })
    }

    pub fn loadings(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn dictionary(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn latent_dim(&self) -> usize {
        self.z.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.z.ncols()
    }

    pub fn n_features(&self) -> usize {
        self.q.ncols()
    }

    /// Parameter vector of sample `i`, `qᵀ z_i`.
    pub fn theta(&self, i: usize) -> Array1<f64> {
        self.q.t().dot(&self.z.column(i))
    }

    /// Mean of the parameter vectors of `ids`, summed in ascending index order.
    pub fn mean_theta(&self, ids: &[usize]) -> Array1<f64> {
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        let mut acc = Array1::<f64>::zeros(self.n_features());
        for &i in &sorted {
            acc += &self.theta(i);
        }
        acc / sorted.len() as f64
    }
}

/// The `p x n` matrix whose column `i` is `qᵀ z_i`.
pub fn assemble_omega(f: &Factorization) -> Array2<f64> {
    f.q.t().dot(&f.z)
}

/// Rescales every column of the dictionary to unit Euclidean norm. The
/// loadings are left as they are.
pub fn normalize_dictionary(f: &Factorization) -> Result<Factorization> {
    let mut q = f.q.clone();
    for (j, mut col) in q.axis_iter_mut(Axis(1)).enumerate() {
        let norm = col.dot(&col).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroDictionaryColumn(j));
        }
        col.mapv_inplace(|v| v / norm);
    }
    Ok(Factorization { z: f.z.clone(), q })
}

/// Average of the per-sample parameter vectors.
pub fn center_of_mass(f: &Factorization) -> Array1<f64> {
    let all: Vec<usize> = (0..f.n_samples()).collect();
    f.mean_theta(&all)
}

/// Neighbor-ball radius on squared loading distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Radius {
    Fixed(f64),
    /// Re-chosen every iteration so the mean neighbor count hits the target.
    Auto(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    /// l1 strength on each personalized parameter vector.
    pub lambda: f64,
    /// Distance-matching strength.
    pub gamma: f64,
    /// Pull of the metric weights toward one.
    pub upsilon: f64,
    pub latent_dim: usize,
    pub radius: Radius,
    pub alpha0: f64,
    pub decay: f64,
    /// Standard deviation of the initialization noise around the population model.
    pub init_noise: f64,
    /// Floor on the denominator of the personalized learning rate.
    pub rate_floor: f64,
    /// Training models averaged per prediction.
    pub k_neighbors: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda: 1e-1,
            gamma: 1e-2,
            upsilon: 1e-2,
            latent_dim: 2,
            radius: Radius::Auto(10.0),
            alpha0: 1e-4,
            decay: 1.0 - 1e-4,
            init_noise: 1e-4,
            rate_floor: 1e-3,
            k_neighbors: 3,
            max_iters: 5000,
            rel_tol: 1e-6,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidHyper(msg));
        let nonneg = [
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("upsilon", self.upsilon),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        let positive = [
            ("alpha0", self.alpha0),
            ("init_noise", self.init_noise),
            ("rate_floor", self.rate_floor),
            ("rel_tol", self.rel_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return bad(format!("decay must lie in (0, 1), got {}", self.decay));
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be >= 1".into());
        }
        if self.k_neighbors == 0 {
            return bad("k_neighbors must be >= 1".into());
        }
        match self.radius {
            Radius::Fixed(r) if !(r > 0.0 && r.is_finite()) => {
                bad(format!("radius must be > 0, got {r}"))
            }
            Radius::Auto(t) if !(t > 0.0 && t.is_finite()) => {
                bad(format!("target neighbor count must be > 0, got {t}"))
            }
            _ => Ok(()),
        }
    }
}

/// Everything needed to assemble test-time models.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub factorization: Factorization,
    pub phi: MetricWeights,
    pub theta_pop: Array1<f64>,
    pub train_u: Covariates,
    pub metrics: Vec<FeatureMetric>,
    pub task: Task,
    pub hyper: HyperParams,
}

impl TrainedModel {
    pub fn new(
        factorization: Factorization,
        phi: MetricWeights,
        theta_pop: Array1<f64>,
        train_u: Covariates,
        metrics: Vec<FeatureMetric>,
        task: Task,
        hyper: HyperParams,
    ) -> Result<Self> {
        if phi.len() != train_u.n_cols() || metrics.len() != train_u.n_cols() {
            return Err(Error::Dimension(format!(
                "{} metric weights and {} metrics for {} covariate columns",
                phi.len(),
                metrics.len(),
                train_u.n_cols()
            )));
        }
        if factorization.n_samples() != train_u.n_rows() {
            return Err(Error::Dimension(format!(
                "{} loadings for {} training rows",
                factorization.n_samples(),
                train_u.n_rows()
            )));
        }
        if theta_pop.len() != factorization.n_features() {
            return Err(Error::Dimension(format!(
                "population model has {} coefficients, dictionary has {}",
                theta_pop.len(),
                factorization.n_features()
            )));
        }
        crate::metric::check_schema(&train_u, &metrics)?;
        Ok(Self {
            factorization,
            phi,
            theta_pop,
            train_u,
            metrics,
            task,
            hyper,
        })
    }

    pub fn omega(&self) -> Array2<f64> {
        assemble_omega(&self.factorization)
    }
}
