use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use persreg::metric::FeatureMetric;
use persreg::model::{Dataset, Task};
use persreg::optimizer::{fit_traced, TraceRecord};
use persreg::simulator::{accuracy, auroc, generate, mse, r_squared, recovery_error, train_test_split, NOISE_STD};
use persreg::predict_point;
use serde::{Deserialize, Serialize};

use crate::error::{io_context, CliError, CliResult};
use crate::table::{self, fmt_f64};
use crate::{config, model_file, EvaluateArgs, Part, PredictArgs, SimulateArgs, SplitArgs, TrainArgs};

/// Tolerances of the per-step and cumulative center-of-mass checks.
const STEP_TOL: f64 = 1e-10;
const DRIFT_TOL: f64 = 1e-8;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    seed: u64,
    n: usize,
    p: usize,
    k: usize,
    l1_normalized: bool,
    noise_std: f64,
    train: Vec<usize>,
    test: Vec<usize>,
    thresholds: Vec<f64>,
    amplitudes: Vec<f64>,
    /// Zero-based covariate driving each coefficient.
    drivers: Vec<usize>,
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    io_context(fs::write(path, s), path)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = io_context(fs::read_to_string(path), path)?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    io_context(fs::create_dir_all(dir), dir)
}

/// Row indices chosen by `--split/--part`, or `None` for all rows.
fn selected_rows(split: &SplitArgs, default: Part, n_rows: usize) -> CliResult<Option<Vec<usize>>> {
    let Some(path) = &split.split else {
        return Ok(None);
    };
    let meta: Meta = read_json(path)?;
    let rows = match split.part.unwrap_or(default) {
        Part::Train => meta.train,
        Part::Test => meta.test,
    };
    if let Some(&bad) = rows.iter().find(|&&r| r >= n_rows) {
        return Err(CliError::input(format!(
            "{}: row {bad} out of range for {n_rows} rows",
            path.display()
        )));
    }
    Ok(Some(rows))
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let mut inst = generate(a.n, a.p, a.k, a.seed)?;
    if a.l1_normalize {
        inst = inst.with_l1_normalized_rows()?;
    }
    ensure_dir(&a.out)?;
    let d = &inst.dataset;
    table::write_matrix(&a.out.join("X.csv"), "x", d.x())?;
    table::write_vector(&a.out.join("Y.csv"), "y", d.y())?;
    table::write_covariates(&a.out.join("U.csv"), d.covariates())?;
    table::write_matrix(&a.out.join("omega_true.csv"), "theta", &inst.omega_true.t().to_owned())?;
    let (train, test) = train_test_split(a.n, a.seed);
    let meta = Meta {
        seed: a.seed,
        n: a.n,
        p: a.p,
        k: a.k,
        l1_normalized: a.l1_normalize,
        noise_std: NOISE_STD,
        train,
        test,
        thresholds: inst.thresholds.to_vec(),
        amplitudes: inst.amplitudes.to_vec(),
        drivers: inst.drivers.clone(),
    };
    write_json(&a.out.join("meta.json"), &meta)
}

fn load_schema(path: Option<&Path>) -> CliResult<Option<Vec<FeatureMetric>>> {
    path.map(read_json).transpose()
}

#[derive(Serialize)]
struct TraceLine<'a> {
    #[serde(flatten)]
    record: &'a TraceRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    step_bound_ok: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    drift_bound_ok: Option<bool>,
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let x = table::read_matrix(&a.x)?;
    let y = table::read_vector(&a.y)?;
    let schema = load_schema(a.schema.as_deref())?;
    let u = table::read_covariates(&a.u, schema.as_deref())?;
    if x.nrows() != y.len() || x.nrows() != u.n_rows() {
        return Err(CliError::input(format!(
            "row counts differ: X has {}, Y has {}, U has {}",
            x.nrows(),
            y.len(),
            u.n_rows()
        )));
    }
    let (x, y, u) = match selected_rows(&a.split, Part::Train, x.nrows())? {
        Some(rows) => (x.select(Axis(0), &rows), y.select(Axis(0), &rows), u.select_rows(&rows)),
        None => (x, y, u),
    };
    let task: Task = a.task.into();
    let dataset = Dataset::new(x, y, u, task)?;
    let hyper = config::resolve(a.config.as_deref(), &a.hyper)?;
    if a.instrument && task != Task::Regression {
        log::warn!("center-of-mass bounds are stated for squared loss; checking anyway");
    }

    let mut lines = Vec::new();
    let mut violations = (0usize, 0usize);
    let want_trace = a.trace || a.instrument;
    let model = fit_traced(&dataset, &hyper, a.seed, |r| {
        if !want_trace {
            return;
        }
        let (step_ok, drift_ok) = if a.instrument {
            let s = r.step_bound_holds(STEP_TOL);
            let d = r.drift_bound_holds(DRIFT_TOL);
            violations.0 += usize::from(!s);
            violations.1 += usize::from(!d);
            (Some(s), Some(d))
        } else {
            (None, None)
        };
        let line = TraceLine {
            record: r,
            step_bound_ok: step_ok,
            drift_bound_ok: drift_ok,
        };
        lines.push(serde_json::to_string(&line).expect("trace records serialize"));
    })?;
    if a.instrument && (violations.0 > 0 || violations.1 > 0) {
        log::warn!(
            "center-of-mass bound violated: per-step on {} of {} steps, cumulative on {}",
            violations.0,
            lines.len(),
            violations.1
        );
    }

    ensure_dir(&a.out)?;
    model_file::save(&a.out.join("model.json"), &model)?;
    table::write_matrix(
        &a.out.join("Z_embedding.csv"),
        "z",
        &model.factorization.loadings().t().to_owned(),
    )?;
    let phi_rows: Vec<Vec<String>> = model
        .phi
        .as_array()
        .iter()
        .enumerate()
        .map(|(j, &w)| vec![format!("u{j}"), fmt_f64(w)])
        .collect();
    table::write_rows(&a.out.join("phi.csv"), &["covariate".into(), "phi".into()], &phi_rows)?;
    table::write_matrix(&a.out.join("omega.csv"), "theta", &model.omega().t().to_owned())?;
    if want_trace {
        let mut text = lines.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        let path = a.out.join("trace.jsonl");
        io_context(fs::write(&path, text), &path)?;
    }
    Ok(())
}

pub fn predict(a: &PredictArgs) -> CliResult<()> {
    let mut model = model_file::load(&a.model)?;
    if let Some(k) = a.k_neighbors {
        if k == 0 {
            return Err(CliError::input("--k-neighbors must be >= 1"));
        }
        model.hyper.k_neighbors = k;
    }
    let x = table::read_matrix(&a.x)?;
    let u = table::read_covariates(&a.u, Some(&model.metrics))?;
    let p = model.factorization.n_features();
    if x.ncols() != p {
        return Err(CliError::input(format!("X has {} columns, model expects {p}", x.ncols())));
    }
    if x.nrows() != u.n_rows() {
        return Err(CliError::input(format!(
            "X has {} rows, U has {}",
            x.nrows(),
            u.n_rows()
        )));
    }
    let rows = selected_rows(&a.split, Part::Test, x.nrows())?.unwrap_or_else(|| (0..x.nrows()).collect());

    let mut header = vec!["row_id".to_string(), "y_hat".into(), "neighbor_ids".into()];
    if a.theta {
        header.extend((0..p).map(|j| format!("theta{j}")));
    }
    let mut out = Vec::with_capacity(rows.len());
    for &r in &rows {
        let pred = predict_point(&model, x.row(r), &u.row(r))?;
        let ids: Vec<String> = pred.neighbor_ids.iter().map(usize::to_string).collect();
        let mut line = vec![r.to_string(), fmt_f64(pred.y_hat), ids.join(";")];
        if a.theta {
            line.extend(pred.theta.iter().map(|&v| fmt_f64(v)));
        }
        out.push(line);
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    table::write_rows(&a.out, &header, &out)
}

#[derive(Debug, Serialize)]
struct Metrics {
    n: usize,
    mse: f64,
    r2: f64,
    /// Set when constant predictions or targets forced `r2` to zero.
    r2_degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    recovery: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    auroc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
}

fn read_predictions(path: &Path) -> CliResult<(Vec<usize>, Vec<f64>)> {
    let (header, rows) = table::read_raw(path)?;
    if header.len() < 2 || header[0] != "row_id" || header[1] != "y_hat" {
        return Err(CliError::input(format!(
            "{}: expected columns row_id,y_hat,...",
            path.display()
        )));
    }
    let mut ids = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let bad = || CliError::input(format!("{}: malformed row {i}", path.display()));
        ids.push(r[0].trim().parse::<usize>().map_err(|_| bad())?);
        y.push(r[1].trim().parse::<f64>().map_err(|_| bad())?);
    }
    Ok((ids, y))
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let (ids, y_hat) = read_predictions(&a.predictions)?;
    let y_all = table::read_vector(&a.y)?;
    let expected = selected_rows(&a.split, Part::Test, y_all.len())?.unwrap_or_else(|| (0..y_all.len()).collect());
    if expected.len() != ids.len() {
        return Err(CliError::input(format!(
            "{} predictions for {} targets",
            ids.len(),
            expected.len()
        )));
    }
    if expected != ids {
        return Err(CliError::input("prediction row ids do not match the target rows"));
    }
    let y_true: Vec<f64> = expected.iter().map(|&r| y_all[r]).collect();
    let (r2, degenerate) = r_squared(&y_hat, &y_true)?;
    if degenerate {
        log::warn!("constant predictions or targets; r2 reported as 0");
    }
    let mut metrics = Metrics {
        n: ids.len(),
        mse: mse(&y_hat, &y_true)?,
        r2,
        r2_degenerate: degenerate,
        recovery: None,
        auroc: None,
        accuracy: None,
    };
    if Task::from(a.task) == Task::Classification {
        metrics.auroc = Some(auroc(&y_hat, &y_true)?);
        metrics.accuracy = Some(accuracy(&y_hat, &y_true)?);
    }
    if let (Some(model_path), Some(truth_path)) = (&a.model, &a.omega_true) {
        let model = model_file::load(model_path)?;
        let truth = table::read_matrix(truth_path)?;
        let rows = match &a.split.split {
            Some(_) => {
                let train = SplitArgs {
                    split: a.split.split.clone(),
                    part: Some(Part::Train),
                };
                selected_rows(&train, Part::Train, truth.nrows())?.unwrap_or_default()
            }
            None => (0..truth.nrows()).collect(),
        };
        let truth: Array2<f64> = truth.select(Axis(0), &rows).t().to_owned();
        metrics.recovery = Some(recovery_error(&model.omega(), &truth)?);
    }
    write_json(&a.out, &metrics)
}
