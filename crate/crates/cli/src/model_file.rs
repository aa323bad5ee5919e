//! JSON form of a trained model.

use std::path::Path;

use ndarray::{Array1, Array2};
use persreg::metric::{FeatureMetric, MetricWeights};
use persreg::model::{Covariates, Factorization, HyperParams, Task, TrainedModel};
use serde::{Deserialize, Serialize};

use crate::error::{io_context, CliError, CliResult};

const FORMAT: &str = "persreg-model/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    task: Task,
    hyper: HyperParams,
    theta_pop: Vec<f64>,
    phi: Vec<f64>,
    metrics: Vec<FeatureMetric>,
    /// `q` rows of length `p`.
    dictionary: Vec<Vec<f64>>,
    /// One row of length `q` per training sample.
    loadings: Vec<Vec<f64>>,
    train_u: Covariates,
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> CliResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::input(format!("model {what} rows have unequal lengths")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat)
        .map_err(|e| CliError::input(format!("model {what}: {e}")))
}

pub fn to_json(model: &TrainedModel) -> CliResult<String> {
    let f = &model.factorization;
    let file = ModelFile {
        format: FORMAT.to_string(),
        task: model.task,
        hyper: model.hyper.clone(),
        theta_pop: model.theta_pop.to_vec(),
        phi: model.phi.as_array().to_vec(),
        metrics: model.metrics.clone(),
        dictionary: to_rows(f.dictionary()),
        loadings: to_rows(&f.loadings().t().to_owned()),
        train_u: model.train_u.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> CliResult<TrainedModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format != FORMAT {
        return Err(CliError::input(format!("unsupported model format '{}'", file.format)));
    }
    file.hyper.validate()?;
    let z = from_rows(&file.loadings, "loadings")?.t().to_owned();
    let q = from_rows(&file.dictionary, "dictionary")?;
    let factorization = Factorization::new(z, q)?;
    let phi = MetricWeights::new(Array1::from(file.phi))?;
    let train_u = Covariates::new(file.train_u.columns().to_vec())?;
    Ok(TrainedModel::new(
        factorization,
        phi,
        Array1::from(file.theta_pop),
        train_u,
        file.metrics,
        file.task,
        file.hyper,
    )?)
}

pub fn save(path: &Path, model: &TrainedModel) -> CliResult<()> {
    io_context(std::fs::write(path, to_json(model)?), path)
}

pub fn load(path: &Path) -> CliResult<TrainedModel> {
    let text = io_context(std::fs::read_to_string(path), path)?;
    from_json(&text).map_err(|e| match e {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use persreg::model::{CovariateColumn, Dataset};
    use persreg::optimizer::fit;

    fn model() -> TrainedModel {
        let n = 12;
        let x = Array2::from_shape_fn((n, 2), |(i, j)| ((i * 3 + j) as f64 * 0.7).sin());
        let y = Array1::from_shape_fn(n, |i| (i as f64 * 0.3).cos() / 3.0);
        let u = Covariates::new(vec![
            CovariateColumn::Continuous((0..n).map(|i| i as f64 / 7.0).collect()),
            CovariateColumn::Categorical((0..n).map(|i| ["a", "b"][i % 2].to_string()).collect()),
        ])
        .unwrap();
        let d = Dataset::new(x, y, u, Task::Regression).unwrap();
        let h = HyperParams {
            max_iters: 15,
            ..HyperParams::default()
        };
        fit(&d, &h, 4).unwrap()
    }

    #[test]
    fn reserialization_is_byte_identical() {
        let first = to_json(&model()).unwrap();
        let second = to_json(&from_json(&first).unwrap()).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn loaded_model_matches_original() {
        let m = model();
        let back = from_json(&to_json(&m).unwrap()).unwrap();
        assert_eq!(back.factorization, m.factorization);
        assert_eq!(back.phi, m.phi);
        assert_eq!(back.theta_pop, m.theta_pop);
        assert_eq!(back.train_u, m.train_u);
        assert_eq!(back.hyper, m.hyper);
    }

    #[test]
    fn malformed_models_rejected() {
        let text = to_json(&model()).unwrap();
        assert!(from_json(&text[..text.len() - 5]).is_err());
        let wrong = text.replace("persreg-model/1", "other/9");
        assert!(from_json(&wrong).is_err());
        let extra = text.replacen('{', "{\"surprise\": 1,", 1);
        assert!(from_json(&extra).is_err());
    }
}
