//! Re-render the human-facing outputs (comparison table, overlaid ROC
//! figure) from a classify_report.json, without refitting anything. Useful
//! when only the presentation changed or when scores were imported.

use std::fs;

use landmark_maxent::error::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::svg;
use crate::util::{ensure_output_dir, out_path, write_artifact, write_csv, write_svg};

#[derive(Serialize)]
struct TableRow {
    model: String,
    auroc: f64,
    max_accuracy: f64,
    n_test_a: usize,
    n_test_b: usize,
}

fn get<'a>(value: &'a Value, key: &str) -> Result<&'a Value> {
    value
        .get(key)
        .ok_or_else(|| Error::schema(format!("classify report is missing the '{key}' field")))
}

fn number(value: &Value, key: &str) -> Result<f64> {
    get(value, key)?
        .as_f64()
        .ok_or_else(|| Error::schema(format!("'{key}' in classify report is not a number")))
}

fn count(value: &Value, key: &str) -> Result<usize> {
    get(value, key)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| Error::schema(format!("'{key}' in classify report is not a count")))
}

fn text(value: &Value, key: &str) -> Result<String> {
    Ok(get(value, key)?
        .as_str()
        .ok_or_else(|| Error::schema(format!("'{key}' in classify report is not a string")))?
        .to_string())
}

pub fn run(config: &RunConfig) -> Result<()> {
    let source = config.require_input()?;
    let raw = fs::read_to_string(source)?;
    let doc: Value = serde_json::from_str(&raw)
        .map_err(|e| Error::schema(format!("could not parse {}: {e}", source.display())))?;

    let table_in = get(&doc, "table")?
        .as_array()
        .ok_or_else(|| Error::schema("'table' in classify report is not an array"))?;
    let mut rows = Vec::with_capacity(table_in.len());
    for entry in table_in {
        rows.push(TableRow {
            model: text(entry, "model")?,
            auroc: number(entry, "auroc")?,
            max_accuracy: number(entry, "max_accuracy")?,
            n_test_a: count(entry, "n_test_a")?,
            n_test_b: count(entry, "n_test_b")?,
        });
    }

    let roc_in = get(&doc, "roc")?
        .as_array()
        .ok_or_else(|| Error::schema("'roc' in classify report is not an array"))?;
    let mut curves = Vec::with_capacity(roc_in.len());
    for entry in roc_in {
        let points_in = get(entry, "points")?
            .as_array()
            .ok_or_else(|| Error::schema("'points' in a roc entry is not an array"))?;
        let mut points = Vec::with_capacity(points_in.len());
        for p in points_in {
            let pair = p
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| Error::schema("roc points must be [fpr, tpr] pairs"))?;
            let fpr = pair[0].as_f64().ok_or_else(|| Error::schema("roc fpr is not a number"))?;
            let tpr = pair[1].as_f64().ok_or_else(|| Error::schema("roc tpr is not a number"))?;
            points.push((fpr, tpr));
        }
        curves.push((text(entry, "model")?, number(entry, "auroc")?, points));
    }

    ensure_output_dir(config)?;
    let table_path = out_path(config, "table.csv");
    write_csv(
        &table_path,
        &["model", "auroc", "max_accuracy", "n_test_a", "n_test_b"],
        &rows,
    )?;
    let svg_path = out_path(config, "roc_overlay.svg");
    write_svg(config, &svg_path, &svg::roc_overlay(&curves))?;

    let report_path = out_path(config, "report.json");
    write_artifact(
        config,
        &report_path,
        json!({
            "source": source.display().to_string(),
            "n_models": rows.len(),
            "files": [
                table_path.display().to_string(),
                svg_path.display().to_string(),
            ],
        }),
    )?;
    for p in [&table_path, &svg_path, &report_path] {
        println!("{}", p.display());
    }
    Ok(())
}
