//! Fit one density model to a dataset and store it with its coordinate
//! system. Gaussian families fit in ambient coordinates on the full input;
//! the cubic and machine families fit in reduced coordinates on a
//! subject-level train split, with the held-out split driving their
//! convergence monitoring.

use landmark_maxent::cubic::fit_cubic;
use landmark_maxent::dataset::{
    compute_bare_moments, compute_intersubject_moments, detect_null_modes, BareMomentConfig,
    ConstraintSet, DisplacementVector, InterSubjectConfig, MomentStatistics,
};
use landmark_maxent::error::{Error, Result};
use landmark_maxent::gaussian::{fit_variant, GaussianFitConfig, GaussianVariant};
use landmark_maxent::grbm::train_pcd;
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use crate::config::{Flavor, RunConfig};
use crate::util::{
    constraint_fingerprint, constraints_json, ensure_output_dir, load_input, out_path,
    split_single_cohort, write_artifact, write_csv,
};

pub fn flavored_moments(
    config: &RunConfig,
    vectors: &[DisplacementVector],
) -> Result<MomentStatistics> {
    match config.flavor {
        Flavor::Bare => compute_bare_moments(
            vectors,
            &BareMomentConfig { order: 2, n_bootstrap: 0, seed: config.seed },
        ),
        Flavor::Intersubject => compute_intersubject_moments(
            vectors,
            &InterSubjectConfig { n_realizations: config.n_realizations, seed: config.seed },
        ),
    }
}

fn reduce_all(cs: &ConstraintSet, vectors: &[DisplacementVector]) -> Vec<DVector<f64>> {
    vectors.iter().map(|v| cs.reduce(&v.values)).collect()
}

#[derive(Serialize)]
struct CubicTraceRow {
    epoch: usize,
    test_ll: f64,
    train_ll: f64,
    acceptance_rate: f64,
    boundary_fraction: f64,
    grad_norm: f64,
}

#[derive(Serialize)]
struct GrbmTraceRow {
    step: usize,
    test_ll: f64,
    train_ll: f64,
    reconstruction_error: f64,
}

fn write_model_artifacts(
    config: &RunConfig,
    family: &str,
    model_json: &str,
    cs: &ConstraintSet,
    report: serde_json::Value,
) -> Result<()> {
    let fingerprint = format!("{:016x}", constraint_fingerprint(cs));
    let model_value: serde_json::Value =
        serde_json::from_str(model_json).expect("model serialization is valid JSON");
    let constraints_value: serde_json::Value =
        serde_json::from_str(&cs.to_json()).expect("constraint serialization is valid JSON");

    let model_path = out_path(config, "model.json");
    write_artifact(
        config,
        &model_path,
        json!({ "family": family, "model": model_value }),
    )?;
    let cs_path = out_path(config, "constraints.json");
    write_artifact(
        config,
        &cs_path,
        json!({
            "summary": constraints_json(cs),
            "fingerprint": fingerprint,
            "constraints": constraints_value,
        }),
    )?;
    let report_path = out_path(config, "fit_report.json");
    write_artifact(config, &report_path, report)?;
    for p in [&model_path, &cs_path, &report_path] {
        println!("{}", p.display());
    }
    Ok(())
}

pub fn run(config: &RunConfig) -> Result<()> {
    let (dataset, warnings) = load_input(config)?;
    if dataset.vectors.is_empty() {
        return Err(Error::precondition("fit needs a non-empty dataset"));
    }
    ensure_output_dir(config)?;
    let stats = flavored_moments(config, &dataset.vectors)?;
    let cs = detect_null_modes(&stats, config.eigen_threshold)?;
    let fingerprint = constraint_fingerprint(&cs);

    match config.model.as_str() {
        "maxent3" => {
            let (train, monitor) =
                split_single_cohort(&dataset.vectors, config.train_fraction, config.seed)?;
            let train_red = reduce_all(&cs, &train);
            let monitor_red = reduce_all(&cs, &monitor);
            let fit = fit_cubic(&train_red, &monitor_red, &config.cubic.fit_config(config.seed))?;
            let mut model = fit.model;
            model.coordinate_key = Some(fingerprint);

            let rows: Vec<CubicTraceRow> = fit
                .trace
                .iter()
                .map(|e| CubicTraceRow {
                    epoch: e.epoch,
                    test_ll: e.test_ll,
                    train_ll: e.train_ll,
                    acceptance_rate: e.acceptance_rate,
                    boundary_fraction: e.boundary_fraction,
                    grad_norm: e.grad_norm,
                })
                .collect();
            let trace_path = out_path(config, "trace.csv");
            write_csv(
                &trace_path,
                &["epoch", "test_ll", "train_ll", "acceptance_rate", "boundary_fraction", "grad_norm"],
                &rows,
            )?;

            let report = json!({
                "family": "maxent3",
                "dataset_warnings": warnings,
                "n_train": train.len(),
                "n_monitor": monitor.len(),
                "reduced_dim": cs.rank(),
                "stopping": {
                    "rule": "relative-improvement",
                    "converged": fit.converged,
                    "epochs_run": fit.epochs_run,
                    "max_epochs": config.cubic.max_epochs,
                    "check_every": config.cubic.check_every,
                    "rel_tol": config.cubic.rel_tol,
                    "stall_epochs": config.cubic.stall_epochs,
                    "final_test_ll": fit.trace.last().map(|e| e.test_ll),
                },
                "warnings": fit.warnings,
                "trace_file": trace_path.display().to_string(),
            });
            println!("{}", trace_path.display());
            write_model_artifacts(config, "maxent3", &model.to_json(), &cs, report)
        }
        "grbm" => {
            let (train, monitor) =
                split_single_cohort(&dataset.vectors, config.train_fraction, config.seed)?;
            let train_red = reduce_all(&cs, &train);
            let monitor_red = reduce_all(&cs, &monitor);
            let trained = train_pcd(&train_red, &monitor_red, &config.grbm.train_config(config.seed))?;
            let mut model = trained.model;
            model.coordinate_key = Some(fingerprint);

            let rows: Vec<GrbmTraceRow> = trained
                .trace
                .iter()
                .map(|e| GrbmTraceRow {
                    step: e.step,
                    test_ll: e.test_ll,
                    train_ll: e.train_ll,
                    reconstruction_error: e.reconstruction_error,
                })
                .collect();
            let trace_path = out_path(config, "trace.csv");
            write_csv(
                &trace_path,
                &["step", "test_ll", "train_ll", "reconstruction_error"],
                &rows,
            )?;

            let report = json!({
                "family": "grbm",
                "dataset_warnings": warnings,
                "n_train": train.len(),
                "n_monitor": monitor.len(),
                "reduced_dim": cs.rank(),
                "stopping": {
                    "rule": "fixed-steps-with-stationarity-check",
                    "stationary": trained.stationary,
                    "steps": config.grbm.steps,
                    "eval_every": config.grbm.eval_every,
                    "window": config.grbm.window,
                    "final_test_ll": trained.trace.last().map(|e| e.test_ll),
                },
                "warnings": trained.warnings,
                "trace_file": trace_path.display().to_string(),
            });
            println!("{}", trace_path.display());
            write_model_artifacts(config, "grbm", &model.to_json(), &cs, report)
        }
        tag => {
            let variant = GaussianVariant::from_tag(tag)?;
            let gauss_cfg = GaussianFitConfig {
                eigen_threshold: config.eigen_threshold,
                ..GaussianFitConfig::default()
            };
            let model = fit_variant(&stats, &cs, variant, &gauss_cfg)?;
            let report = json!({
                "family": "gaussian",
                "variant": variant.tag(),
                "dataset_warnings": warnings,
                "n_vectors": dataset.vectors.len(),
                "rank": model.rank(),
                "log_norm": model.log_norm,
            });
            write_model_artifacts(config, "gaussian", &model.to_json(), &cs, report)
        }
    }
}
