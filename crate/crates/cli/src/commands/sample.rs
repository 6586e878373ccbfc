//! Draw vectors from a stored model and write them in the dataset CSV
//! layout, so sampled cohorts flow back into stats/fit/analyze unchanged.

use std::path::Path;

use landmark_maxent::cubic::{sample_cubic, CubicModel, McmcConfig};
use landmark_maxent::dataset::{save_dataset, ConstraintSet, Dataset, DisplacementVector};
use landmark_maxent::error::{Error, Result};
use landmark_maxent::gaussian::GaussianModel;
use landmark_maxent::grbm::GrbmModel;
use nalgebra::DVector;
use serde_json::json;

use crate::config::RunConfig;
use crate::util::{constraint_fingerprint, ensure_output_dir, out_path, write_artifact};

/// Gibbs sweeps discarded before the first recorded machine draw.
const GRBM_SAMPLE_BURN_IN: usize = 200;

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(format!("{}: {e}", path.display())))
}

/// Pull a sub-object out of a stored artifact, re-serialized for the
/// library's own from_json parsers.
fn extract(doc: &serde_json::Value, key: &str, path: &Path) -> Result<String> {
    let value = doc
        .get(key)
        .ok_or_else(|| Error::schema(format!("{} has no {key:?} key", path.display())))?;
    Ok(serde_json::to_string(value).expect("sub-value serializes"))
}

fn load_constraints(config: &RunConfig) -> Result<Option<ConstraintSet>> {
    match &config.constraints {
        None => Ok(None),
        Some(path) => {
            let doc = read_json(path)?;
            let cs = ConstraintSet::from_json(&extract(&doc, "constraints", path)?)?;
            Ok(Some(cs))
        }
    }
}

/// Constraint set whose fingerprint matches the model's coordinate key.
fn require_matching_constraints(
    config: &RunConfig,
    key: Option<u64>,
) -> Result<ConstraintSet> {
    let cs = load_constraints(config)?.ok_or_else(|| {
        Error::precondition(
            "this model lives in reduced coordinates; pass --constraints with the \
             constraints.json stored next to it",
        )
    })?;
    match key {
        Some(k) if k != constraint_fingerprint(&cs) => Err(Error::precondition(
            "constraint set does not match the model's coordinate system \
             (fingerprint mismatch)",
        )),
        _ => Ok(cs),
    }
}

pub fn run(config: &RunConfig) -> Result<()> {
    let model_path = config.require_input()?;
    let doc = read_json(model_path)?;
    let family = doc
        .get("family")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::schema(format!("{} has no \"family\" key", model_path.display())))?
        .to_string();
    let model_json = extract(&doc, "model", model_path)?;
    let n = config.n_samples;

    let (draws, dim): (Vec<DVector<f64>>, usize) = match family.as_str() {
        "gaussian" => {
            let model = GaussianModel::from_json(&model_json)?;
            (model.sample(n, config.seed), model.dim)
        }
        "maxent3" => {
            let model = CubicModel::from_json(&model_json)?;
            let cs = require_matching_constraints(config, model.coordinate_key)?;
            if model.dim != cs.rank() {
                return Err(Error::precondition(format!(
                    "model dimension {} does not match constraint rank {}",
                    model.dim,
                    cs.rank()
                )));
            }
            let reduced = if n == 0 {
                Vec::new()
            } else {
                let run = sample_cubic(
                    &model,
                    &McmcConfig {
                        n_chains: 1,
                        burn_in: config.cubic.burn_in,
                        n_sweeps: n * config.cubic.thin,
                        thin: config.cubic.thin,
                        seed: config.seed,
                        stream_offset: 0,
                        init_sigma: None,
                    },
                )?;
                run.samples.into_iter().take(n).collect()
            };
            (reduced.iter().map(|x| cs.embed(x)).collect(), cs.dim)
        }
        "grbm" => {
            let model = GrbmModel::from_json(&model_json)?;
            let cs = require_matching_constraints(config, model.coordinate_key)?;
            if model.n_visible() != cs.rank() {
                return Err(Error::precondition(format!(
                    "model dimension {} does not match constraint rank {}",
                    model.n_visible(),
                    cs.rank()
                )));
            }
            let reduced = if n == 0 {
                Vec::new()
            } else {
                model.sample(n, GRBM_SAMPLE_BURN_IN, config.seed)
            };
            (reduced.iter().map(|x| cs.embed(x)).collect(), cs.dim)
        }
        other => {
            return Err(Error::schema(format!(
                "unknown model family {other:?}; expected gaussian, maxent3, or grbm"
            )))
        }
    };

    if dim % 2 != 0 {
        return Err(Error::precondition(format!(
            "sampled dimension {dim} does not fit the landmark CSV layout"
        )));
    }
    let dataset = Dataset {
        vectors: draws
            .into_iter()
            .enumerate()
            .map(|(i, values)| DisplacementVector { subject: i as u32, within_index: 0, values })
            .collect(),
        n_landmarks: dim / 2,
        units: "sampled".into(),
        landmark_means: None,
    };
    ensure_output_dir(config)?;
    let csv = out_path(config, "samples.csv");
    save_dataset(&dataset, &csv, None)?;
    let report = out_path(config, "sample_report.json");
    write_artifact(
        config,
        &report,
        json!({
            "family": family,
            "n_samples": dataset.vectors.len(),
            "dim": dim,
            "files": [csv.display().to_string()],
        }),
    )?;
    println!("{}", csv.display());
    println!("{}", report.display());
    Ok(())
}
