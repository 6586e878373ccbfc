//! Geometric reading of the fitted couplings: longitudinal/torsion channels
//! per landmark pair, bootstrap significance, distance and angle trends,
//! raw-correlation versus coupling comparison, and displacement-angle
//! histograms checked against the fitted model.

use landmark_maxent::dataset::detect_null_modes;
use landmark_maxent::error::{Error, Result};
use landmark_maxent::gaussian::{fit_gaussian, GaussianFitConfig};
use landmark_maxent::geometry::{
    angle_histogram, bootstrap_couplings, bootstrap_pseudo_inverse_sigma, chi_squared_two_sample,
    chi_squared_uniformity, compare_c_vs_j, displacement_angles, elastic_constants,
    longitudinal_torsion, t_values, trend_export, AngleHistogram, ChiSquaredTest,
};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::svg;
use crate::util::{
    ensure_output_dir, load_input, matrix_rows, out_path, stats_json, write_artifact, write_csv,
    write_svg,
};

use super::fit::flavored_moments;

const ANGLE_BINS: usize = 12;

#[derive(Serialize)]
struct CouplingRow {
    i: usize,
    j: usize,
    mean_distance: f64,
    angle: f64,
    j_par_signed: f64,
    sigma_par: f64,
    t_par: f64,
    j_perp_signed: f64,
    sigma_perp: f64,
    t_perp: f64,
}

#[derive(Serialize)]
struct TrendCsvRow {
    i: usize,
    j: usize,
    mean_distance: f64,
    angle: f64,
    j_par_abs: f64,
    j_par_signed: f64,
    t_par: f64,
    j_perp_abs: f64,
    j_perp_signed: f64,
    t_perp: f64,
}

#[derive(Serialize)]
struct AngleCsvRow {
    landmark: usize,
    bin: usize,
    bin_center: f64,
    count_data: u64,
    count_model: u64,
}

fn chi2_json(test: &ChiSquaredTest) -> serde_json::Value {
    json!({
        "statistic": test.statistic,
        "dof": test.dof,
        "critical_95": test.critical_95,
        "consistent_95": test.consistent_95,
    })
}

fn mask_rows(m: &DMatrix<bool>) -> Vec<Vec<bool>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

pub fn run(config: &RunConfig) -> Result<()> {
    let (dataset, warnings) = load_input(config)?;
    let positions = dataset.landmark_means.clone().ok_or_else(|| {
        Error::precondition(
            "geometry analysis needs landmark mean positions; pass --manifest with \
             a landmark_means entry",
        )
    })?;
    if positions.len() != dataset.n_landmarks {
        return Err(Error::schema(format!(
            "manifest lists {} landmark positions for {} landmarks",
            positions.len(),
            dataset.n_landmarks
        )));
    }

    let stats = flavored_moments(config, &dataset.vectors)?;
    let report = longitudinal_torsion(&stats, &positions, config.eigen_threshold)?;
    let sigma = bootstrap_couplings(
        &dataset.vectors,
        &positions,
        config.eigen_threshold,
        config.n_bootstrap,
        config.seed,
    )?;
    let t_par = t_values(&report.j_par_signed, &sigma.sigma_par)?;
    let t_perp = t_values(&report.j_perp_signed, &sigma.sigma_perp)?;
    let trend = trend_export(&report, &t_par, &t_perp);
    let elastic = elastic_constants(&report.j_par_signed);

    // Full pairwise fit for the correlation-vs-coupling contrast and for
    // model-side angle draws.
    let cs = detect_null_modes(&stats, config.eigen_threshold)?;
    let gauss_cfg =
        GaussianFitConfig { eigen_threshold: config.eigen_threshold, ..GaussianFitConfig::default() };
    let model = fit_gaussian(&stats, &cs, &gauss_cfg)?;
    let sigma_j = bootstrap_pseudo_inverse_sigma(
        &dataset.vectors,
        config.eigen_threshold,
        config.n_bootstrap,
        config.seed,
    )?;
    let comparison = compare_c_vs_j(&stats, &model, &sigma_j)?;

    // Angle histograms: data against a model cohort of the same size, so
    // both sides face identical sampling noise.
    let mode = config.angle_mode.mode();
    let data_vectors: Vec<DVector<f64>> =
        dataset.vectors.iter().map(|v| v.values.clone()).collect();
    let model_vectors = model.sample(data_vectors.len(), config.seed);
    let mut angle_rows: Vec<AngleCsvRow> = Vec::new();
    let mut angle_json = Vec::new();
    let mut panels: Vec<(usize, AngleHistogram)> = Vec::new();
    for landmark in 0..dataset.n_landmarks {
        let data_angles =
            displacement_angles(&data_vectors, landmark, dataset.n_landmarks, mode)?;
        let model_angles =
            displacement_angles(&model_vectors, landmark, dataset.n_landmarks, mode)?;
        let data_hist = angle_histogram(&data_angles, ANGLE_BINS, mode)?;
        let model_hist = angle_histogram(&model_angles, ANGLE_BINS, mode)?;
        let uniformity = chi_squared_uniformity(&data_hist)?;
        // Degenerate landmarks (single populated bin) cannot be compared.
        let vs_model = chi_squared_two_sample(&data_hist, &model_hist);
        for bin in 0..ANGLE_BINS {
            angle_rows.push(AngleCsvRow {
                landmark,
                bin,
                bin_center: data_hist.bin_center(bin),
                count_data: data_hist.counts[bin],
                count_model: model_hist.counts[bin],
            });
        }
        angle_json.push(json!({
            "landmark": landmark,
            "n": data_hist.n,
            "uniformity": chi2_json(&uniformity),
            "vs_model": match &vs_model {
                Ok(test) => chi2_json(test),
                Err(e) => json!({ "skipped": e.to_string() }),
            },
        }));
        panels.push((landmark, data_hist));
    }

    ensure_output_dir(config)?;
    let coupling_rows: Vec<CouplingRow> = report
        .pairs
        .iter()
        .map(|p| CouplingRow {
            i: p.i,
            j: p.j,
            mean_distance: p.mean_distance,
            angle: p.angle,
            j_par_signed: report.j_par_signed[(p.i, p.j)],
            sigma_par: sigma.sigma_par[(p.i, p.j)],
            t_par: t_par.t[(p.i, p.j)],
            j_perp_signed: report.j_perp_signed[(p.i, p.j)],
            sigma_perp: sigma.sigma_perp[(p.i, p.j)],
            t_perp: t_perp.t[(p.i, p.j)],
        })
        .collect();
    let couplings_path = out_path(config, "couplings.csv");
    write_csv(
        &couplings_path,
        &[
            "i", "j", "mean_distance", "angle", "j_par_signed", "sigma_par", "t_par",
            "j_perp_signed", "sigma_perp", "t_perp",
        ],
        &coupling_rows,
    )?;

    let trend_rows: Vec<TrendCsvRow> = trend
        .rows
        .iter()
        .map(|r| TrendCsvRow {
            i: r.i,
            j: r.j,
            mean_distance: r.mean_distance,
            angle: r.angle,
            j_par_abs: r.j_par_abs,
            j_par_signed: r.j_par_signed,
            t_par: r.t_par,
            j_perp_abs: r.j_perp_abs,
            j_perp_signed: r.j_perp_signed,
            t_perp: r.t_perp,
        })
        .collect();
    let trend_path = out_path(config, "trend.csv");
    write_csv(
        &trend_path,
        &[
            "i", "j", "mean_distance", "angle", "j_par_abs", "j_par_signed", "t_par",
            "j_perp_abs", "j_perp_signed", "t_perp",
        ],
        &trend_rows,
    )?;

    let angles_path = out_path(config, "angles.csv");
    write_csv(
        &angles_path,
        &["landmark", "bin", "bin_center", "count_data", "count_model"],
        &angle_rows,
    )?;

    let par_svg = out_path(config, "coupling_par.svg");
    write_svg(
        config,
        &par_svg,
        &svg::coupling_diagram(&positions, &report.j_par_signed, &t_par.t, "longitudinal couplings"),
    )?;
    let perp_svg = out_path(config, "coupling_perp.svg");
    write_svg(
        config,
        &perp_svg,
        &svg::coupling_diagram(&positions, &report.j_perp_signed, &t_perp.t, "torsion couplings"),
    )?;
    let angles_svg = out_path(config, "angles.svg");
    write_svg(config, &angles_svg, &svg::angle_panels(&panels))?;

    let report_path = out_path(config, "analysis.json");
    write_artifact(
        config,
        &report_path,
        json!({
            "dataset": {
                "n_vectors": dataset.vectors.len(),
                "n_subjects": dataset.n_subjects(),
                "n_landmarks": dataset.n_landmarks,
                "units": dataset.units,
                "warnings": warnings,
            },
            "statistics": stats_json(&stats),
            "couplings": {
                "j_par_signed": matrix_rows(&report.j_par_signed),
                "j_perp_signed": matrix_rows(&report.j_perp_signed),
                "sigma_par": matrix_rows(&sigma.sigma_par),
                "sigma_perp": matrix_rows(&sigma.sigma_perp),
                "bootstrap_replicates": sigma.n_replicates,
                "significant_par": t_par.significant,
                "significant_perp": t_perp.significant,
                "elastic_constants": matrix_rows(&elastic),
                "notes": report.notes,
            },
            "trend": {
                "n_rows": trend.rows.len(),
                "spearman_par_distance": trend.spearman_par_distance,
                "spearman_par_angle": trend.spearman_par_angle,
                "spearman_perp_distance": trend.spearman_perp_distance,
                "spearman_perp_angle": trend.spearman_perp_angle,
                "notes": trend.notes,
            },
            "correlation_vs_coupling": {
                "c_only_significant": comparison.c_only,
                "j_only_significant": comparison.j_only,
                "c_mask": mask_rows(&comparison.c_mask),
                "j_mask": mask_rows(&comparison.j_mask),
            },
            "angles": angle_json,
            "files": [
                couplings_path.display().to_string(),
                trend_path.display().to_string(),
                angles_path.display().to_string(),
                par_svg.display().to_string(),
                perp_svg.display().to_string(),
                angles_svg.display().to_string(),
            ],
        }),
    )?;
    for p in [&couplings_path, &trend_path, &angles_path, &par_svg, &perp_svg, &angles_svg, &report_path]
    {
        println!("{}", p.display());
    }
    Ok(())
}
