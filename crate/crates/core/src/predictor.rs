//! Test-time model assembly: average the parameters of the training samples
//! nearest to the query under the learned covariate distance. Predictors
//! never influence which neighbors are chosen.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::metric::rho_phi;
use crate::model::{CovariateValue, TrainedModel};
use crate::population::predict_population;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub theta: Array1<f64>,
    pub y_hat: f64,
    pub neighbor_ids: Vec<usize>,
    pub neighbor_dists: Vec<f64>,
}

/// Training indices with their distances to `u`, nearest first; ties go to
/// the lower index.
pub fn rank_neighbors_with_dists(
    model: &TrainedModel,
    u: &[CovariateValue<'_>],
) -> Result<Vec<(usize, f64)>> {
    let n = model.train_u.n_rows();
    let mut ranked = Vec::with_capacity(n);
    for i in 0..n {
        let d = rho_phi(&model.phi, &model.metrics, u, &model.train_u.row(i))?;
        ranked.push((i, d));
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

pub fn rank_neighbors(model: &TrainedModel, u: &[CovariateValue<'_>]) -> Result<Vec<usize>> {
    Ok(rank_neighbors_with_dists(model, u)?
        .into_iter()
        .map(|(i, _)| i)
        .collect())
}

/// Assembles the model for one test point from its `k_neighbors` nearest
/// training samples and applies it to `x`.
pub fn predict_point(
    model: &TrainedModel,
    x: ArrayView1<f64>,
    u: &[CovariateValue<'_>],
) -> Result<Prediction> {
    let p = model.factorization.n_features();
    if x.len() != p {
        return Err(Error::Dimension(format!("{} predictors, model expects {p}", x.len())));
    }
    let k = model.hyper.k_neighbors.max(1).min(model.train_u.n_rows());
    let ranked = rank_neighbors_with_dists(model, u)?;
    let (neighbor_ids, neighbor_dists): (Vec<usize>, Vec<f64>) = ranked.into_iter().take(k).unzip();
    let theta = model.factorization.mean_theta(&neighbor_ids);
    let y_hat = predict_population(theta.view(), x, model.task)?;
    Ok(Prediction {
        theta,
        y_hat,
        neighbor_ids,
        neighbor_dists,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricWeights;
    use crate::model::{Covariates, Factorization, HyperParams, Task};
    use ndarray::{array, Array2};

    fn model(z: Array2<f64>, u: Array2<f64>, phi: Array1<f64>, k: usize) -> TrainedModel {
        let p = 2;
        let latent = z.nrows();
        let q = Array2::eye(latent.max(p)).slice(ndarray::s![..latent, ..p]).to_owned();
        let train_u = Covariates::from_continuous(&u).unwrap();
        let metrics = train_u.schema();
        TrainedModel::new(
            Factorization::new(z, q).unwrap(),
            MetricWeights::new(phi).unwrap(),
            Array1::zeros(p),
            train_u,
            metrics,
            Task::Regression,
            HyperParams {
                k_neighbors: k,
                ..HyperParams::default()
            },
        )
        .unwrap()
    }

    fn row(v: &[f64]) -> Vec<CovariateValue<'static>> {
        v.iter().map(|&x| CovariateValue::Continuous(x)).collect()
    }

    #[test]
    fn hand_sorted_order() {
        let m = model(
            array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]],
            array![[0.2], [0.1], [5.0]],
            array![1.0],
            3,
        );
        assert_eq!(rank_neighbors(&m, &row(&[0.0])).unwrap(), vec![1, 0, 2]);
    }

    #[test]
    fn exact_match_comes_first() {
        let u = Array2::from_shape_fn((8, 1), |(i, _)| i as f64 * 0.5);
        let z = Array2::from_shape_fn((2, 8), |(d, i)| (i + d) as f64);
        let m = model(z, u, array![1.0], 1);
        let ranked = rank_neighbors_with_dists(&m, &row(&[2.5])).unwrap();
        assert_eq!(ranked[0], (5, 0.0));
        let pred = predict_point(&m, array![1.0, 1.0].view(), &row(&[2.5])).unwrap();
        assert_eq!(pred.theta, m.factorization.theta(5));
    }

    #[test]
    fn zero_weights_fall_back_to_index_order() {
        let u = array![[3.0], [1.0], [2.0], [0.0]];
        let m = model(Array2::zeros((2, 4)), u, array![0.0], 3);
        assert_eq!(rank_neighbors(&m, &row(&[9.0])).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn averages_three_models() {
        let m = model(
            array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]],
            array![[0.2], [0.1], [0.3]],
            array![1.0],
            3,
        );
        let pred = predict_point(&m, array![1.0, 0.0].view(), &row(&[0.0])).unwrap();
        assert_eq!(pred.theta, array![2.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(pred.y_hat, 2.0 / 3.0);
        assert_eq!(pred.neighbor_ids, vec![1, 0, 2]);
        assert!(pred.neighbor_dists.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn single_training_sample() {
        let m = model(array![[2.0]], array![[0.5]], array![1.0], 3);
        let pred = predict_point(&m, array![1.0, 1.0].view(), &row(&[100.0])).unwrap();
        assert_eq!(pred.theta, m.factorization.theta(0));
        assert_eq!(pred.neighbor_ids, vec![0]);
    }

    #[test]
    fn length_mismatch_rejected() {
        let m = model(array![[1.0, 0.0], [0.0, 1.0]], array![[0.0], [1.0]], array![1.0], 1);
        assert!(predict_point(&m, array![1.0].view(), &row(&[0.0])).is_err());
        assert!(rank_neighbors(&m, &row(&[0.0, 1.0])).is_err());
    }
}
