//! Shared plumbing: artifact writing, matrix JSON shapes, subject splits.

use std::path::{Path, PathBuf};

use landmark_maxent::dataset::{
    load_dataset, ConstraintSet, Dataset, DisplacementVector, MomentStatistics,
};
use landmark_maxent::error::{Error, Result};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

/// Write a JSON artifact with the run configuration as its provenance
/// block. `body` supplies every other top-level key.
pub fn write_artifact(
    config: &RunConfig,
    path: &Path,
    body: serde_json::Value,
) -> Result<()> {
    let mut doc = serde_json::Map::new();
    doc.insert("config".to_string(), serde_json::to_value(config).expect("config serializes"));
    match body {
        serde_json::Value::Object(map) => doc.extend(map),
        other => {
            doc.insert("body".to_string(), other);
        }
    }
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(doc))
        .expect("artifact serializes");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Write an SVG with the run configuration embedded as a metadata element
/// right inside the root tag, so figures carry their provenance too.
pub fn write_svg(config: &RunConfig, path: &Path, svg: &str) -> Result<()> {
    let json = serde_json::to_string(config).expect("config serializes");
    let escaped = json.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
    let meta = format!("\n<metadata id=\"run-config\">{escaped}</metadata>");
    // The document starts with its root tag, so the first '>' closes it.
    let cut = svg.find('>').map(|i| i + 1).unwrap_or(0);
    let mut doc = String::with_capacity(svg.len() + meta.len());
    doc.push_str(&svg[..cut]);
    doc.push_str(&meta);
    doc.push_str(&svg[cut..]);
    std::fs::write(path, doc)?;
    Ok(())
}

pub fn out_path(config: &RunConfig, name: &str) -> PathBuf {
    config.output_dir.join(name)
}

/// Load the input dataset plus optional manifest, surfacing load warnings
/// for the artifact.
pub fn load_input(config: &RunConfig) -> Result<(Dataset, Vec<String>)> {
    let report = load_dataset(config.require_input()?, config.manifest.as_deref())?;
    Ok((report.dataset, report.warnings))
}

pub fn ensure_output_dir(config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&config.output_dir)?;
    Ok(())
}

/// Row-major nested-array view of a matrix for JSON artifacts.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

pub fn stats_json(stats: &MomentStatistics) -> serde_json::Value {
    json!({
        "flavor": stats.flavor,
        "sample_count": stats.sample_count,
        "n_subjects": stats.n_subjects,
        "n_realizations": stats.n_realizations,
        "mean": stats.mean.iter().cloned().collect::<Vec<f64>>(),
        "corr2": matrix_rows(&stats.corr2),
        "sigma_corr2": matrix_rows(&stats.sigma_corr2),
    })
}

pub fn constraints_json(c: &ConstraintSet) -> serde_json::Value {
    json!({
        "dim": c.dim,
        "n_null": c.n_null(),
        "rank": c.rank(),
        "threshold": c.threshold,
        "spectrum": c.spectrum,
        "gap_warning": c.gap_warning,
    })
}

/// Deterministic identity of a coordinate system (a constraint set's
/// retained basis), stamped on reduced-coordinate models so scores from
/// different coordinate systems cannot be compared by accident.
pub fn constraint_fingerprint(c: &ConstraintSet) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bits: u64| {
        hash ^= bits;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    };
    eat(c.dim as u64);
    eat(c.n_null() as u64);
    for v in c.retained_basis.iter() {
        eat(v.to_bits());
    }
    for v in c.null_offsets.iter() {
        eat(v.to_bits());
    }
    hash
}

/// Split one cohort by subject: whole subjects go to train or test, never
/// both. Needs at least two subjects.
pub fn split_single_cohort(
    vectors: &[DisplacementVector],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<DisplacementVector>, Vec<DisplacementVector>)> {
    let mut subjects: Vec<u32> = vectors.iter().map(|v| v.subject).collect();
    subjects.sort_unstable();
    subjects.dedup();
    if subjects.len() < 2 {
        return Err(Error::precondition(format!(
            "subject-level split needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);
    let n_train = ((subjects.len() as f64 * train_fraction).round() as usize)
        .clamp(1, subjects.len() - 1);
    let train_set: std::collections::BTreeSet<u32> =
        subjects[..n_train].iter().cloned().collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for v in vectors {
        if train_set.contains(&v.subject) {
            train.push(v.clone());
        } else {
            test.push(v.clone());
        }
    }
    Ok((train, test))
}

pub fn write_csv<S: Serialize>(path: &Path, header: &[&str], rows: &[S]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
    w.write_record(header).map_err(|e| Error::parse(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
