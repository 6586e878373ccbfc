//! Two-class discrimination with the full model ladder.
//!
//! One model per class per family, scores are log-likelihood ratios on a
//! held-out subject-level test split, and every family lands in one auROC
//! table. Gaussian families fit in ambient coordinates; the cubic and
//! machine families fit in coordinates reduced by the pooled training
//! null modes, so all nonlinear scores share one coordinate system.
//! Families that fail to fit are skipped with a note instead of failing
//! the whole run.

use landmark_maxent::classify::{
    fit_pc_ttest, import_external_scores, roc_from_scores, score_vectors, split_by_subject,
    Class, RocCurve, ScoringModel, Split,
};
use landmark_maxent::cubic::fit_cubic;
use landmark_maxent::dataset::{
    compute_bare_moments, detect_null_modes, load_dataset, BareMomentConfig, ConstraintSet,
    DisplacementVector,
};
use landmark_maxent::error::{Error, Result};
use landmark_maxent::gaussian::{fit_variant, GaussianFitConfig, GaussianVariant};
use landmark_maxent::grbm::train_pcd;
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::svg;
use crate::util::{
    constraint_fingerprint, constraints_json, ensure_output_dir, out_path, split_single_cohort,
    write_artifact, write_csv, write_svg,
};

use super::fit::flavored_moments;

/// Fraction of each class's training subjects used to fit the iterative
/// families; the rest monitors their convergence, keeping the real test
/// split out of every training decision.
const INNER_TRAIN_FRACTION: f64 = 0.8;

struct LadderEntry {
    tag: &'static str,
    curve: RocCurve,
    note: Option<String>,
}

#[derive(Serialize)]
struct TableRow {
    model: String,
    auroc: f64,
    max_accuracy: f64,
    n_test_a: usize,
    n_test_b: usize,
}

#[derive(Serialize)]
struct ScoreRow {
    model: String,
    vector_id: usize,
    true_class: char,
    score: f64,
}

#[derive(Serialize)]
struct RocPointRow {
    model: String,
    fpr: f64,
    tpr: f64,
    threshold: f64,
}

fn values(vs: &[DisplacementVector]) -> Vec<DVector<f64>> {
    vs.iter().map(|v| v.values.clone()).collect()
}

fn reduce(cs: &ConstraintSet, vs: &[DisplacementVector]) -> Vec<DVector<f64>> {
    vs.iter().map(|v| cs.reduce(&v.values)).collect()
}

/// Fit one iterative family per class and score the test vectors. The
/// closure gets (fit vectors, monitor vectors, per-class seed) in reduced
/// coordinates and returns a scoring model.
fn scored_pair<M>(
    split: &Split,
    cs: &ConstraintSet,
    seed: u64,
    test_a: &[DVector<f64>],
    test_b: &[DVector<f64>],
    mut fit_one: impl FnMut(&[DVector<f64>], &[DVector<f64>], u64) -> Result<M>,
    as_scoring: impl for<'m> Fn(&'m M) -> ScoringModel<'m>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut fit_class = |train: &[DisplacementVector], class_seed: u64| -> Result<M> {
        let (fit_vs, monitor_vs) = split_single_cohort(train, INNER_TRAIN_FRACTION, class_seed)?;
        fit_one(&reduce(cs, &fit_vs), &reduce(cs, &monitor_vs), class_seed)
    };
    let model_a = fit_class(&split.train_a, seed)?;
    let model_b = fit_class(&split.train_b, seed.wrapping_add(1))?;
    let sa = score_vectors(&as_scoring(&model_a), &as_scoring(&model_b), test_a)?;
    let sb = score_vectors(&as_scoring(&model_a), &as_scoring(&model_b), test_b)?;
    Ok((sa, sb))
}

fn export_test_vectors(
    path: &std::path::Path,
    test_a: &[DisplacementVector],
    test_b: &[DisplacementVector],
    n_landmarks: usize,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
    let mut header = vec![
        "vector_id".to_string(),
        "subject".to_string(),
        "index".to_string(),
        "true_class".to_string(),
    ];
    for i in 0..n_landmarks {
        header.push(format!("x{i}"));
    }
    for i in 0..n_landmarks {
        header.push(format!("y{i}"));
    }
    w.write_record(&header).map_err(|e| Error::parse(e.to_string()))?;
    for (id, (v, class)) in test_a
        .iter()
        .map(|v| (v, 'A'))
        .chain(test_b.iter().map(|v| (v, 'B')))
        .enumerate()
    {
        let mut record = vec![
            id.to_string(),
            v.subject.to_string(),
            v.within_index.to_string(),
            class.to_string(),
        ];
        record.extend(v.values.iter().map(|x| format!("{x}")));
        w.write_record(&record).map_err(|e| Error::parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(config: &RunConfig) -> Result<()> {
    let input_a = config.require_input()?;
    let input_b = config
        .input_b
        .as_deref()
        .ok_or_else(|| Error::precondition("classify needs --input-b with the class-B dataset"))?;
    let class_a = load_dataset(input_a, None)?.dataset;
    let class_b = load_dataset(input_b, None)?.dataset;
    if class_a.dim() != class_b.dim() {
        return Err(Error::schema(format!(
            "class dimensions disagree: {} vs {}",
            class_a.dim(),
            class_b.dim()
        )));
    }

    let split =
        split_by_subject(&class_a.vectors, &class_b.vectors, config.train_fraction, config.seed)?;

    // Shared coordinate system from the pooled training vectors.
    let pooled: Vec<DisplacementVector> =
        split.train_a.iter().chain(&split.train_b).cloned().collect();
    let pooled_stats = compute_bare_moments(
        &pooled,
        &BareMomentConfig { order: 2, n_bootstrap: 0, seed: config.seed },
    )?;
    let cs = detect_null_modes(&pooled_stats, config.eigen_threshold)?;
    let fingerprint = constraint_fingerprint(&cs);

    let stats_a = flavored_moments(config, &split.train_a)?;
    let stats_b = flavored_moments(config, &split.train_b)?;
    let test_a_ambient = values(&split.test_a);
    let test_b_ambient = values(&split.test_b);
    let test_a_reduced = reduce(&cs, &split.test_a);
    let test_b_reduced = reduce(&cs, &split.test_b);

    let mut entries: Vec<LadderEntry> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();
    let push = |tag: &'static str,
                    note: Option<String>,
                    result: Result<(Vec<f64>, Vec<f64>)>,
                    entries: &mut Vec<LadderEntry>,
                    skipped: &mut Vec<String>| {
        match result.and_then(|(sa, sb)| roc_from_scores(&sa, &sb).map(|c| (sa, sb, c))) {
            Ok((sa, sb, curve)) => {
                entries.push(LadderEntry { tag, curve, note });
                Some((sa, sb))
            }
            Err(e) => {
                skipped.push(format!("{tag} skipped: {e}"));
                None
            }
        }
    };
    let mut score_rows: Vec<ScoreRow> = Vec::new();
    let record_scores = |tag: &str, sa: &[f64], sb: &[f64], rows: &mut Vec<ScoreRow>| {
        for (id, (&score, class)) in sa
            .iter()
            .map(|s| (s, 'A'))
            .chain(sb.iter().map(|s| (s, 'B')))
            .enumerate()
        {
            rows.push(ScoreRow { model: tag.to_string(), vector_id: id, true_class: class, score });
        }
    };

    // Gaussian ladder, ambient coordinates.
    let gauss_cfg =
        GaussianFitConfig { eigen_threshold: config.eigen_threshold, ..GaussianFitConfig::default() };
    for variant in [
        GaussianVariant::FieldsOnly,
        GaussianVariant::Full,
        GaussianVariant::Approximated,
        GaussianVariant::NullXy,
        GaussianVariant::Dot,
    ] {
        let result = (|| {
            let ma = fit_variant(&stats_a, &cs, variant, &gauss_cfg)?;
            let mb = fit_variant(&stats_b, &cs, variant, &gauss_cfg)?;
            let sa =
                score_vectors(&ScoringModel::Gaussian(&ma), &ScoringModel::Gaussian(&mb), &test_a_ambient)?;
            let sb =
                score_vectors(&ScoringModel::Gaussian(&ma), &ScoringModel::Gaussian(&mb), &test_b_ambient)?;
            Ok((sa, sb))
        })();
        if let Some((sa, sb)) = push(variant.tag(), None, result, &mut entries, &mut skipped) {
            record_scores(variant.tag(), &sa, &sb, &mut score_rows);
        }
    }

    // Cubic family, reduced coordinates.
    let cubic_result = scored_pair(
        &split,
        &cs,
        config.seed,
        &test_a_reduced,
        &test_b_reduced,
        |fit_vs, monitor_vs, class_seed| {
            let report = fit_cubic(fit_vs, monitor_vs, &config.cubic.fit_config(class_seed))?;
            let mut model = report.model;
            model.coordinate_key = Some(fingerprint);
            Ok(model)
        },
        |m| ScoringModel::Cubic(m),
    );
    if let Some((sa, sb)) = push("maxent3", None, cubic_result, &mut entries, &mut skipped) {
        record_scores("maxent3", &sa, &sb, &mut score_rows);
    }

    // Machine family, reduced coordinates.
    let mut grbm_note: Option<String> = None;
    let grbm_result = scored_pair(
        &split,
        &cs,
        config.seed,
        &test_a_reduced,
        &test_b_reduced,
        |fit_vs, monitor_vs, class_seed| {
            let report = train_pcd(fit_vs, monitor_vs, &config.grbm.train_config(class_seed))?;
            if !report.stationary {
                grbm_note = Some("training likelihood not stationary at the step budget".into());
            }
            let mut model = report.model;
            model.coordinate_key = Some(fingerprint);
            Ok(model)
        },
        |m| ScoringModel::Grbm(m),
    );
    if let Some((sa, sb)) = push("grbm", grbm_note.clone(), grbm_result, &mut entries, &mut skipped)
    {
        record_scores("grbm", &sa, &sb, &mut score_rows);
    }

    // Density-free baseline, ambient coordinates.
    let baseline_result = (|| {
        let baseline =
            fit_pc_ttest(&values(&split.train_a), &values(&split.train_b), config.eigen_threshold)?;
        let sa: Vec<f64> = test_a_ambient.iter().map(|x| baseline.score(x)).collect();
        let sb: Vec<f64> = test_b_ambient.iter().map(|x| baseline.score(x)).collect();
        Ok((sa, sb))
    })();
    if let Some((sa, sb)) = push("pc-ttest", None, baseline_result, &mut entries, &mut skipped) {
        record_scores("pc-ttest", &sa, &sb, &mut score_rows);
    }

    // Externally computed scores, validated against the test export order.
    if let Some(path) = &config.import_scores {
        let expected: Vec<Class> = std::iter::repeat(Class::A)
            .take(split.test_a.len())
            .chain(std::iter::repeat(Class::B).take(split.test_b.len()))
            .collect();
        let result = (|| {
            let text = std::fs::read_to_string(path)?;
            import_external_scores(&text, &expected)
        })();
        if let Some((sa, sb)) = push("imported", None, result, &mut entries, &mut skipped) {
            record_scores("imported", &sa, &sb, &mut score_rows);
        }
    }

    if entries.is_empty() {
        return Err(Error::numerical(format!(
            "every ladder family failed: {}",
            skipped.join("; ")
        )));
    }
    // Best model first; ties broken by tag so the ordering is total.
    entries.sort_by(|a, b| {
        b.curve.auroc.total_cmp(&a.curve.auroc).then_with(|| a.tag.cmp(b.tag))
    });

    ensure_output_dir(config)?;
    let vectors_path = out_path(config, "test_vectors.csv");
    export_test_vectors(&vectors_path, &split.test_a, &split.test_b, class_a.n_landmarks)?;

    let table: Vec<TableRow> = entries
        .iter()
        .map(|e| TableRow {
            model: e.tag.to_string(),
            auroc: e.curve.auroc,
            max_accuracy: e.curve.max_accuracy,
            n_test_a: e.curve.n_a,
            n_test_b: e.curve.n_b,
        })
        .collect();
    let table_path = out_path(config, "table.csv");
    write_csv(&table_path, &["model", "auroc", "max_accuracy", "n_test_a", "n_test_b"], &table)?;

    let scores_path = out_path(config, "scores.csv");
    write_csv(&scores_path, &["model", "vector_id", "true_class", "score"], &score_rows)?;

    let roc_rows: Vec<RocPointRow> = entries
        .iter()
        .flat_map(|e| {
            e.curve.points.iter().zip(&e.curve.thresholds).map(|(&(fpr, tpr), &threshold)| {
                RocPointRow { model: e.tag.to_string(), fpr, tpr, threshold }
            })
        })
        .collect();
    let roc_csv_path = out_path(config, "roc_points.csv");
    write_csv(&roc_csv_path, &["model", "fpr", "tpr", "threshold"], &roc_rows)?;

    let curves: Vec<(String, f64, Vec<(f64, f64)>)> = entries
        .iter()
        .map(|e| (e.tag.to_string(), e.curve.auroc, e.curve.points.clone()))
        .collect();
    let svg_path = out_path(config, "roc_overlay.svg");
    write_svg(config, &svg_path, &svg::roc_overlay(&curves))?;

    let report_path = out_path(config, "classify_report.json");
    write_artifact(
        config,
        &report_path,
        json!({
            "split": {
                "n_train_a": split.train_a.len(),
                "n_train_b": split.train_b.len(),
                "n_test_a": split.test_a.len(),
                "n_test_b": split.test_b.len(),
                "train_subjects_a": split.train_subjects_a,
                "train_subjects_b": split.train_subjects_b,
            },
            "constraints": constraints_json(&cs),
            "constraint_fingerprint": format!("{fingerprint:016x}"),
            "table": entries.iter().map(|e| json!({
                "model": e.tag,
                "auroc": e.curve.auroc,
                "max_accuracy": e.curve.max_accuracy,
                "n_test_a": e.curve.n_a,
                "n_test_b": e.curve.n_b,
                "note": e.note,
            })).collect::<Vec<_>>(),
            "roc": entries.iter().map(|e| json!({
                "model": e.tag,
                "auroc": e.curve.auroc,
                "points": e.curve.points.iter().map(|&(f, t)| vec![f, t]).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "skipped": skipped,
            "files": [
                vectors_path.display().to_string(),
                table_path.display().to_string(),
                scores_path.display().to_string(),
                roc_csv_path.display().to_string(),
                svg_path.display().to_string(),
            ],
        }),
    )?;
    for p in [&vectors_path, &table_path, &scores_path, &roc_csv_path, &svg_path, &report_path] {
        println!("{}", p.display());
    }
    for s in &skipped {
        eprintln!("warning: {s}");
    }
    Ok(())
}
