//! On-disk layout: `manifest.json`, `labels.csv` and one PMU CSV per
//! example under `examples/`.

use std::fmt::Write as _;
use std::path::Path;

use super::{campaign_label, Dataset, DatasetError, DatasetManifest, Example, Label};
use crate::transient::{read_pmu_csv, write_pmu_csv};

fn io_err(path: &Path, e: impl std::fmt::Display) -> DatasetError {
    DatasetError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn example_path(dir: &Path, id: usize) -> std::path::PathBuf {
    dir.join("examples").join(format!("{id:06}.csv"))
}

fn labels_csv(ds: &Dataset) -> String {
    let task = ds.manifest.task.name();
    let mut out = String::from("id,task,");
    match ds.examples.first().map(|e| &e.label) {
        Some(Label::Vector(v)) => {
            let cols: Vec<String> = (1..=v.len()).map(|i| format!("label_{i}")).collect();
            out.push_str(&cols.join(","));
        }
        _ => out.push_str("label"),
    }
    out.push('\n');
    for ex in &ds.examples {
        let _ = write!(out, "{},{task},", ex.id);
        match &ex.label {
            Label::Class(c) => {
                let _ = write!(out, "{c}");
            }
            Label::Vector(v) => {
                let cols: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                out.push_str(&cols.join(","));
            }
        }
        out.push('\n');
    }
    out
}

/// Writes `ds` under `dir`. Output bytes depend only on the dataset contents.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    let ex_dir = dir.join("examples");
    std::fs::create_dir_all(&ex_dir).map_err(|e| io_err(&ex_dir, e))?;
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&ds.manifest).map_err(|e| io_err(&manifest_path, e))?;
    std::fs::write(&manifest_path, json + "\n").map_err(|e| io_err(&manifest_path, e))?;
    let labels_path = dir.join("labels.csv");
    std::fs::write(&labels_path, labels_csv(ds)).map_err(|e| io_err(&labels_path, e))?;
    for ex in &ds.examples {
        let p = example_path(dir, ex.id);
        std::fs::write(&p, write_pmu_csv(&ex.series)).map_err(|e| io_err(&p, e))?;
    }
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest, DatasetError> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
    if !manifest.verify_hash() {
        return Err(io_err(&path, "manifest hash does not match its contents"));
    }
    Ok(manifest)
}

/// Reads a dataset written by [`write_dataset`]. Labels are recomputed from
/// the series and checked against the stored scenarios.
pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let manifest = load_manifest(dir)?;
    let mut examples = Vec::with_capacity(manifest.total());
    for (id, rec) in manifest.scenarios.iter().enumerate() {
        let p = example_path(dir, id);
        let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        let series = read_pmu_csv(&text, rec.scenario(), rec.seed).map_err(|e| io_err(&p, e))?;
        if series.steps() != rec.steps || series.n_buses() != manifest.n_buses {
            return Err(io_err(&p, format!("expected {} x {} samples", rec.steps, manifest.n_buses)));
        }
        let label = campaign_label(manifest.task, &series);
        examples.push(Example { id, series, label });
    }
    if let Some(split) = &manifest.split {
        if split.train.iter().chain(&split.test).any(|&i| i >= examples.len()) {
            return Err(io_err(&dir.join("manifest.json"), "split references a missing example"));
        }
    }
    Ok(Dataset { manifest, examples })
}
