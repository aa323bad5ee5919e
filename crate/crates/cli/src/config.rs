//! Hyperparameters from defaults, an optional JSON file and flags, in
//! increasing precedence.

use std::path::Path;

use persreg::model::{HyperParams, Radius};
use serde_json::{Map, Value};

use crate::error::{io_context, CliError, CliResult};
use crate::HyperArgs;

pub fn resolve(file: Option<&Path>, flags: &HyperArgs) -> CliResult<HyperParams> {
    let mut merged = match serde_json::to_value(HyperParams::default())? {
        Value::Object(m) => m,
        _ => unreachable!("hyperparameters serialize to an object"),
    };
    if let Some(path) = file {
        let text = io_context(std::fs::read_to_string(path), path)?;
        let overrides: Map<String, Value> = serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        for (k, v) in overrides {
            merged.insert(k, v);
        }
    }
    // unknown keys fail here
    let mut h: HyperParams = serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::input(format!("configuration: {e}")))?;

    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = flags.$field { h.$field = v; })*
        };
    }
    apply!(lambda, gamma, upsilon, latent_dim, alpha0, decay, init_noise, rate_floor, k_neighbors, max_iters, rel_tol);
    if let Some(r) = flags.radius {
        h.radius = Radius::Fixed(r);
    }
    if let Some(t) = flags.target_neighbors {
        h.radius = Radius::Auto(t);
    }
    h.validate()?;
    Ok(h)
}
