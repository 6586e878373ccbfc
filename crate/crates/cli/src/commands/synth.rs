//! Synthetic cohort generation: the landmark fixture or a matched two-class
//! pair differing in exactly one statistical feature.

use landmark_maxent::dataset::{save_dataset, Dataset};
use landmark_maxent::error::{Error, Result};
use landmark_maxent::synth::{
    generate, landmark_fixture, make_two_class, PlantedModel, SubjectStructure, TwoClassConfig,
};
use serde_json::json;

use crate::config::{RunConfig, SynthKind};
use crate::util::{ensure_output_dir, out_path, write_artifact};

fn as_dataset(model: &PlantedModel, seed: u64, units: &str) -> Result<Dataset> {
    let vectors = generate(model, seed)?;
    Ok(Dataset {
        vectors,
        n_landmarks: model.constraints.dim / 2,
        units: units.into(),
        landmark_means: None,
    })
}

pub fn run(config: &RunConfig) -> Result<()> {
    ensure_output_dir(config)?;
    let s = &config.synth;
    let mut files = Vec::new();

    let detail = match s.kind {
        SynthKind::Fixture => {
            let fixture = landmark_fixture()?;
            let dataset = fixture.generate(config.seed)?;
            let csv = out_path(config, "synth.csv");
            let manifest = out_path(config, "synth_manifest.json");
            save_dataset(&dataset, &csv, Some(&manifest))?;
            files.push(csv);
            files.push(manifest);
            json!({
                "kind": "fixture",
                "n_vectors": dataset.vectors.len(),
                "n_subjects": dataset.n_subjects(),
                "n_landmarks": dataset.n_landmarks,
                "planted_n_null": fixture.model.constraints.n_null(),
                "planted_rank": fixture.model.constraints.rank(),
            })
        }
        kind => {
            if s.ambient_dim % 2 != 0 || s.ambient_dim < 2 {
                return Err(Error::precondition(format!(
                    "synthetic ambient dimension must be a positive even number \
                     (landmark CSV layout), got {}",
                    s.ambient_dim
                )));
            }
            let (contrast, label) = match kind {
                SynthKind::Mean => (TwoClassConfig::Mean { shift: s.shift }, "mean"),
                SynthKind::Pairwise => (TwoClassConfig::Pairwise { rho: s.rho }, "pairwise"),
                SynthKind::ThirdOrder => (TwoClassConfig::ThirdOrder { q: s.q }, "third-order"),
                SynthKind::Fixture => unreachable!(),
            };
            let subjects = SubjectStructure::new(s.n_subjects, s.per_subject);
            let (model_a, model_b) =
                make_two_class(contrast, s.ambient_dim, s.n_null, subjects, config.seed)?;
            let data_a = as_dataset(&model_a, config.seed.wrapping_add(1), "synthetic")?;
            let data_b = as_dataset(&model_b, config.seed.wrapping_add(2), "synthetic")?;
            for (name, data) in [("class_a", &data_a), ("class_b", &data_b)] {
                let csv = out_path(config, &format!("{name}.csv"));
                let manifest = out_path(config, &format!("{name}_manifest.json"));
                save_dataset(data, &csv, Some(&manifest))?;
                files.push(csv);
                files.push(manifest);
            }
            json!({
                "kind": label,
                "n_vectors_per_class": data_a.vectors.len(),
                "n_subjects_per_class": s.n_subjects,
                "ambient_dim": s.ambient_dim,
                "planted_n_null": s.n_null,
                "planted_rank": s.ambient_dim - s.n_null,
            })
        }
    };

    let report = out_path(config, "synth_report.json");
    let listed: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    write_artifact(config, &report, json!({ "generated": detail, "files": listed }))?;
    for f in &files {
        println!("{}", f.display());
    }
    println!("{}", report.display());
    Ok(())
}
