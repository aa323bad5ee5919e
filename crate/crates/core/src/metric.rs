//! Covariate metrics and the learned weighted distance between samples,
//! plus neighbor-ball queries over the loadings.
//!
//! The per-covariate distances never change during training, so they are
//! computed once into a [`DistanceCache`]. Neighbor balls depend on the
//! current loadings and are recomputed with a uniform grid.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CovariateColumn, CovariateValue, Covariates, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMetric {
    /// `|a - b|` on continuous covariates.
    AbsoluteDifference,
    /// `1{a != b}` on categorical covariates.
    Discrete,
}

impl FeatureMetric {
    pub fn expects(&self) -> &'static str {
        match self {
            FeatureMetric::AbsoluteDifference => "continuous",
            FeatureMetric::Discrete => "categorical",
        }
    }
}

/// Distance between two values of covariate `column` under `metric`.
pub fn feature_distance(
    metric: FeatureMetric,
    column: usize,
    a: CovariateValue<'_>,
    b: CovariateValue<'_>,
) -> Result<f64> {
    match (metric, a, b) {
        (FeatureMetric::AbsoluteDifference, CovariateValue::Continuous(a), CovariateValue::Continuous(b)) => {
            Ok((a - b).abs())
        }
        (FeatureMetric::Discrete, CovariateValue::Categorical(a), CovariateValue::Categorical(b)) => {
            Ok(if a == b { 0.0 } else { 1.0 })
        }
        _ => Err(Error::CovariateType {
            column,
            expected: metric.expects(),
        }),
    }
}

/// Checks that every covariate column has the type its metric needs.
pub fn check_schema(u: &Covariates, metrics: &[FeatureMetric]) -> Result<()> {
    if metrics.len() != u.n_cols() {
        return Err(Error::Dimension(format!(
            "schema has {} entries for {} covariate columns",
            metrics.len(),
            u.n_cols()
        )));
    }
    for (l, (col, m)) in u.columns().iter().zip(metrics).enumerate() {
        let ok = matches!(
            (col, m),
            (CovariateColumn::Continuous(_), FeatureMetric::AbsoluteDifference)
                | (CovariateColumn::Categorical(_), FeatureMetric::Discrete)
        );
        if !ok {
            return Err(Error::CovariateType {
                column: l,
                expected: m.expects(),
            });
        }
    }
    Ok(())
}

/// Nonnegative weights of the learned covariate distance.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricWeights(Array1<f64>);

impl MetricWeights {
    pub fn new(phi: Array1<f64>) -> Result<Self> {
        if let Some(bad) = phi.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidData(format!(
                "metric weights must be finite and >= 0, got {bad}"
            )));
        }
        Ok(Self(phi))
    }

    pub fn ones(k: usize) -> Self {
        Self(Array1::ones(k))
    }

    /// Clamps negative entries to zero.
    pub fn projected(phi: Array1<f64>) -> Self {
        Self(phi.mapv(|v| v.max(0.0)))
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Weighted covariate distance between two raw rows.
pub fn rho_phi(
    w: &MetricWeights,
    metrics: &[FeatureMetric],
    u: &[CovariateValue<'_>],
    v: &[CovariateValue<'_>],
) -> Result<f64> {
    let k = w.len();
    if metrics.len() != k || u.len() != k || v.len() != k {
        return Err(Error::Dimension(format!(
            "{k} weights, {} metrics, rows of length {} and {}",
            metrics.len(),
            u.len(),
            v.len()
        )));
    }
    let mut acc = 0.0;
    for l in 0..k {
        acc += w.0[l] * feature_distance(metrics[l], l, u[l], v[l])?;
    }
    Ok(acc)
}

/// Pairwise per-covariate distances over the training rows, stored in
/// condensed upper-triangular form (pair-major, covariate-minor).
#[derive(Debug, Clone)]
pub struct DistanceCache {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl DistanceCache {
    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_covariates(&self) -> usize {
        self.k
    }

    fn pair_offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        // rows 0..i contribute (n-1) + (n-2) + ... + (n-i) pairs
        (i * (2 * self.n - i - 1) / 2 + (j - i - 1)) * self.k
    }

    /// Distances of every covariate for the pair `(i, j)`; empty on the diagonal.
    pub fn pair(&self, i: usize, j: usize) -> &[f64] {
        const ZEROS: [f64; 0] = [];
        if i == j {
            return &ZEROS;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let off = self.pair_offset(a, b);
        &self.data[off..off + self.k]
    }

    pub fn get(&self, l: usize, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.pair(i, j)[l]
        }
    }

    /// `sum_l phi_l d_l(i, j)`, accumulated in covariate order.
    pub fn rho(&self, w: &MetricWeights, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.pair(i, j)
            .iter()
            .zip(w.0.iter())
            .fold(0.0, |acc, (d, p)| acc + p * d)
    }

    /// Dense `n x n` matrix of covariate `l`.
    pub fn matrix(&self, l: usize) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.n), |(i, j)| self.get(l, i, j))
    }
}

/// Computes every pairwise covariate distance once.
pub fn precompute_cache(dataset: &Dataset, metrics: &[FeatureMetric]) -> Result<DistanceCache> {
    precompute_cache_for(dataset.covariates(), metrics)
}

pub fn precompute_cache_for(u: &Covariates, metrics: &[FeatureMetric]) -> Result<DistanceCache> {
    check_schema(u, metrics)?;
    let n = u.n_rows();
    let k = u.n_cols();
    for (l, col) in u.columns().iter().enumerate() {
        if let CovariateColumn::Continuous(v) = col {
            if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFiniteCovariate { row, column: l });
            }
        }
    }
    let mut data = Vec::with_capacity(n * n.saturating_sub(1) / 2 * k);
    for i in 0..n {
        for j in (i + 1)..n {
            for (l, col) in u.columns().iter().enumerate() {
                data.push(feature_distance(metrics[l], l, col.value(i), col.value(j))?);
            }
        }
    }
    Ok(DistanceCache { n, k, data })
}

/// Squared Euclidean distance between loading columns `i` and `j`.
#[inline]
pub fn sq_dist(z: &Array2<f64>, i: usize, j: usize) -> f64 {
    let mut acc = 0.0;
    for d in 0..z.nrows() {
        let diff = z[[d, i]] - z[[d, j]];
        acc += diff * diff;
    }
    acc
}

const GRID_MAX_DIM: usize = 8;
const GRID_MIN_POINTS: usize = 64;

/// Neighbor balls `{j != i : |z_i - z_j|^2 < r}` for every column of `z`
/// (shape `q x n`). Each set is sorted ascending.
pub fn neighbor_sets(z: &Array2<f64>, r: f64) -> Result<Vec<Vec<usize>>> {
    if !(r > 0.0) {
        return Err(Error::InvalidRadius(r));
    }
    let (q, n) = z.dim();
    if q > GRID_MAX_DIM || n < GRID_MIN_POINTS {
        return Ok(brute_force_neighbors(z, r));
    }
    match grid_neighbors(z, r) {
        Some(sets) => Ok(sets),
        None => Ok(brute_force_neighbors(z, r)),
    }
}

/// O(n²) reference implementation of [`neighbor_sets`].
pub fn brute_force_neighbors(z: &Array2<f64>, r: f64) -> Vec<Vec<usize>> {
    let n = z.ncols();
    let mut sets = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if sq_dist(z, i, j) < r {
                sets[i].push(j);
                sets[j].push(i);
            }
        }
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    sets
}

/// Uniform-grid search. Returns `None` when cell coordinates would not fit
/// comfortably in an `i64`.
fn grid_neighbors(z: &Array2<f64>, r: f64) -> Option<Vec<Vec<usize>>> {
    let (q, n) = z.dim();
    // slightly wider than sqrt(r) so rounding in the cell index can never
    // separate two points that are within the ball by more than one cell
    let side = r.sqrt() * (1.0 + 1e-9);
    let mins: Vec<f64> = (0..q)
        .map(|d| z.row(d).iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let mut cells: Vec<Vec<i64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut key = Vec::with_capacity(q);
        for d in 0..q {
            let c = ((z[[d, i]] - mins[d]) / side).floor();
            if !(c.is_finite() && c < 1e15) {
                return None;
            }
            key.push(c as i64);
        }
        cells.push(key);
    }
    let mut grid: HashMap<&[i64], Vec<usize>> = HashMap::new();
    for (i, key) in cells.iter().enumerate() {
        grid.entry(key.as_slice()).or_default().push(i);
    }

    let offsets = stencil(q);
    let mut sets = vec![Vec::new(); n];
    let mut probe = vec![0i64; q];
    for i in 0..n {
        for off in &offsets {
            for d in 0..q {
                probe[d] = cells[i][d] + off[d];
            }
            if let Some(bucket) = grid.get(probe.as_slice()) {
                for &j in bucket {
                    if j != i && sq_dist(z, i, j) < r {
                        sets[i].push(j);
                    }
                }
            }
        }
        sets[i].sort_unstable();
    }
    Some(sets)
}

/// All offsets in `{-1, 0, 1}^q`.
fn stencil(q: usize) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::with_capacity(q)];
    for _ in 0..q {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (-1..=1).map(move |o| {
                    let mut v = prefix.clone();
                    v.push(o);
                    v
                })
            })
            .collect();
    }
    out
}

/// Radius giving on average `target_avg` neighbors per point: the m-th
/// smallest squared pairwise distance (m = ceil(target * n / 2)) nudged up
/// by a relative 1e-12 so that pair falls strictly inside the ball.
/// Targets above `n - 1` are clipped.
pub fn auto_radius(z: &Array2<f64>, target_avg: f64) -> Result<f64> {
    let n = z.ncols();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    if !(target_avg > 0.0) {
        return Err(Error::InvalidHyper(format!(
            "target neighbor count must be > 0, got {target_avg}"
        )));
    }
    let target = target_avg.min((n - 1) as f64);
    let n_pairs = n * (n - 1) / 2;
    let m = ((target * n as f64 / 2.0).ceil() as usize).clamp(1, n_pairs);
    let mut d2 = Vec::with_capacity(n_pairs);
    for i in 0..n {
        for j in (i + 1)..n {
            d2.push(sq_dist(z, i, j));
        }
    }
    let (_, kth, _) = d2.select_nth_unstable_by(m - 1, f64::total_cmp);
    let kth = *kth;
    Ok(kth * (1.0 + 1e-12) + 1e-12)
}
