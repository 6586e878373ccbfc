//! Moment statistics plus null-mode detection for one dataset.

use landmark_maxent::dataset::{
    compute_bare_moments, compute_intersubject_moments, detect_null_modes, BareMomentConfig,
    InterSubjectConfig,
};
use landmark_maxent::error::Result;
use serde_json::json;

use crate::config::RunConfig;
use crate::util::{
    constraint_fingerprint, constraints_json, ensure_output_dir, load_input, out_path,
    stats_json, write_artifact,
};

pub fn run(config: &RunConfig) -> Result<()> {
    let (dataset, warnings) = load_input(config)?;
    let bare = compute_bare_moments(
        &dataset.vectors,
        &BareMomentConfig { order: 2, n_bootstrap: config.n_bootstrap, seed: config.seed },
    )?;
    let inter = compute_intersubject_moments(
        &dataset.vectors,
        &InterSubjectConfig { n_realizations: config.n_realizations, seed: config.seed },
    )?;
    // Null modes are a property of the raw second moments; the bare flavor
    // sees every vector and is the right input.
    let constraints = detect_null_modes(&bare, config.eigen_threshold)?;

    ensure_output_dir(config)?;
    let path = out_path(config, "stats.json");
    write_artifact(
        config,
        &path,
        json!({
            "dataset": {
                "n_vectors": dataset.vectors.len(),
                "n_subjects": dataset.n_subjects(),
                "n_landmarks": dataset.n_landmarks,
                "units": dataset.units,
                "warnings": warnings,
            },
            "bare": stats_json(&bare),
            "intersubject": stats_json(&inter),
            "null_modes": constraints_json(&constraints),
            "constraint_fingerprint": format!("{:016x}", constraint_fingerprint(&constraints)),
        }),
    )?;
    println!("{}", path.display());
    Ok(())
}
