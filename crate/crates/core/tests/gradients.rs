//! Analytic gradients against central finite differences.

use ndarray::{Array1, Array2};
use persreg::metric::{brute_force_neighbors, precompute_cache, MetricWeights};
use persreg::model::{Covariates, Dataset, HyperParams, Task};
use persreg::objective::{composite_objective, dmr_gradients, dmr_value, loss_subgradient, predictive_loss};
use persreg::population::{population_gradient, population_objective, ElasticNetConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, k: usize, task: Task) -> Dataset {
    let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
    let y = Array1::from_shape_fn(n, |_| match task {
        Task::Regression => rng.random_range(-2.0..2.0),
        Task::Classification => f64::from(rng.random_bool(0.5)),
    });
    let u = Array2::from_shape_fn((n, k), |_| rng.random_range(0.0..1.0));
    Dataset::new(x, y, Covariates::from_continuous(&u).unwrap(), task).unwrap()
}

#[test]
fn loss_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..100 {
        let task = if case % 2 == 0 { Task::Regression } else { Task::Classification };
        let p = 1 + case % 4;
        let x = Array1::from_shape_fn(p, |_| rng.random_range(-1.0..1.0));
        let theta = Array1::from_shape_fn(p, |_| rng.random_range(-2.0..2.0));
        let y = match task {
            Task::Regression => rng.random_range(-2.0..2.0),
            Task::Classification => f64::from(rng.random_bool(0.5)),
        };
        let g = loss_subgradient(x.view(), y, theta.view(), task).unwrap();
        for j in 0..p {
            let mut hi = theta.clone();
            let mut lo = theta.clone();
            hi[j] += H;
            lo[j] -= H;
            let fd = (predictive_loss(x.view(), y, hi.view(), task).unwrap()
                - predictive_loss(x.view(), y, lo.view(), task).unwrap())
                / (2.0 * H);
            assert!(rel_err(g[j], fd) <= TOL, "case {case} coord {j}: {} vs {fd}", g[j]);
        }
    }
}

#[test]
fn dmr_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..100 {
        let n = 3 + case % 10;
        let q = 1 + case % 3;
        let d = random_dataset(&mut rng, n, 2, 2, Task::Regression);
        let cache = precompute_cache(&d, &d.covariates().schema()).unwrap();
        let z = Array2::from_shape_fn((q, n), |_| rng.random_range(-1.0..1.0));
        let phi = MetricWeights::new(Array1::from_shape_fn(2, |_| rng.random_range(0.1..2.0))).unwrap();
        let nb = brute_force_neighbors(&z, 1.0);
        let gamma = rng.random_range(0.1..3.0);
        let total = |z: &Array2<f64>, phi: &MetricWeights| dmr_value(z, phi, &cache, &nb, gamma).sum();
        let (gz, gphi) = dmr_gradients(&z, &phi, &cache, &nb, gamma);
        for a in 0..q {
            for i in 0..n {
                let mut hi = z.clone();
                let mut lo = z.clone();
                hi[[a, i]] += H;
                lo[[a, i]] -= H;
                let fd = (total(&hi, &phi) - total(&lo, &phi)) / (2.0 * H);
                assert!(rel_err(gz[[a, i]], fd) <= TOL, "case {case}: {} vs {fd}", gz[[a, i]]);
            }
        }
        for l in 0..2 {
            let mut hi = phi.as_array().clone();
            let mut lo = phi.as_array().clone();
            hi[l] += H;
            lo[l] -= H;
            let fd = (total(&z, &MetricWeights::new(hi).unwrap())
                - total(&z, &MetricWeights::new(lo).unwrap()))
                / (2.0 * H);
            assert!(rel_err(gphi[l], fd) <= TOL, "case {case}: {} vs {fd}", gphi[l]);
        }
    }
}

/// Parameters with every coordinate of every `qᵀ z_i` away from zero, so the
/// l1 term is smooth within the difference stencil.
fn smooth_point(rng: &mut ChaCha8Rng, latent: usize, n: usize, p: usize) -> (Array2<f64>, Array2<f64>) {
    loop {
        let z = Array2::from_shape_fn((latent, n), |_| rng.random_range(-1.0..1.0));
        let q = Array2::from_shape_fn((latent, p), |_| rng.random_range(-1.0..1.0));
        let omega = q.t().dot(&z);
        if omega.iter().all(|v: &f64| v.abs() > 1e-3) {
            return (z, q);
        }
    }
}

#[test]
fn composite_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..100 {
        let task = if case % 3 == 0 { Task::Classification } else { Task::Regression };
        let (n, p, latent) = (4 + case % 5, 3, 1 + case % 2);
        let d = random_dataset(&mut rng, n, p, 2, task);
        let cache = precompute_cache(&d, &d.covariates().schema()).unwrap();
        let (z, q) = smooth_point(&mut rng, latent, n, p);
        let phi = MetricWeights::new(Array1::from_shape_fn(2, |_| rng.random_range(0.1..2.0))).unwrap();
        let nb = brute_force_neighbors(&z, 1.5);
        let hyper = HyperParams {
            lambda: rng.random_range(0.0..0.5),
            gamma: rng.random_range(0.0..2.0),
            upsilon: rng.random_range(0.0..1.0),
            ..HyperParams::default()
        };
        let value = |z: &Array2<f64>, q: &Array2<f64>, phi: &Array1<f64>| {
            let w = MetricWeights::new(phi.clone()).unwrap();
            composite_objective(z, q, &w, &d, &cache, &nb, &hyper).unwrap().value
        };
        let b = composite_objective(&z, &q, &phi, &d, &cache, &nb, &hyper).unwrap();
        let check = |analytic: f64, fd: f64, what: &str| {
            assert!(rel_err(analytic, fd) <= TOL, "case {case} {what}: {analytic} vs {fd}");
        };
        let pa = phi.as_array();
        for idx in z.indexed_iter().map(|(ix, _)| ix) {
            let (mut hi, mut lo) = (z.clone(), z.clone());
            hi[idx] += H;
            lo[idx] -= H;
            check(b.grad_z[idx], (value(&hi, &q, pa) - value(&lo, &q, pa)) / (2.0 * H), "z");
        }
        for idx in q.indexed_iter().map(|(ix, _)| ix) {
            let (mut hi, mut lo) = (q.clone(), q.clone());
            hi[idx] += H;
            lo[idx] -= H;
            check(b.grad_q[idx], (value(&z, &hi, pa) - value(&z, &lo, pa)) / (2.0 * H), "q");
        }
        for l in 0..2 {
            let (mut hi, mut lo) = (pa.clone(), pa.clone());
            hi[l] += H;
            lo[l] -= H;
            check(b.grad_phi[l], (value(&z, &q, &hi) - value(&z, &q, &lo)) / (2.0 * H), "phi");
        }
    }
}

#[test]
fn population_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..100 {
        let task = if case % 2 == 0 { Task::Regression } else { Task::Classification };
        let p = 1 + case % 4;
        let d = random_dataset(&mut rng, 12, p, 1, task);
        let cfg = ElasticNetConfig {
            l1: rng.random_range(0.0..0.5),
            l2: rng.random_range(0.0..0.5),
            ..ElasticNetConfig::default()
        };
        let theta = Array1::from_shape_fn(p, |_| {
            let v: f64 = rng.random_range(0.05..2.0);
            if rng.random_bool(0.5) { v } else { -v }
        });
        let g = population_gradient(&d, &theta, &cfg).unwrap();
        for j in 0..p {
            let (mut hi, mut lo) = (theta.clone(), theta.clone());
            hi[j] += H;
            lo[j] -= H;
            let fd = (population_objective(&d, &hi, &cfg).unwrap()
                - population_objective(&d, &lo, &cfg).unwrap())
                / (2.0 * H);
            assert!(rel_err(g[j], fd) <= TOL, "case {case}: {} vs {fd}", g[j]);
        }
    }
}
