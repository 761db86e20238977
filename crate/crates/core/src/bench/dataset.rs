//! On-disk datasets: a JSON manifest pointing at headerless CSV feature
//! tables (one per modality and split) and label files holding one 1-based
//! class index per line. Row order aligns samples across modalities.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::synth::{Dataset, LabeledSet};
use crate::error::{Error, Result};
use crate::model::MultimodalSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityFiles {
    pub name: String,
    pub train_csv: PathBuf,
    pub test_csv: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub modalities: Vec<ModalityFiles>,
    pub train_labels_csv: PathBuf,
    pub test_labels_csv: PathBuf,
}

fn read_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::data(path, e.to_string()))?;
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::data(path, e.to_string()))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::data(
                            path,
                            format!(
                                "row {}, column {}: non-numeric value {cell:?}",
                                r + 1,
                                c + 1
                            ),
                        )
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| match line.trim().parse::<usize>() {
            Ok(label) if label >= 1 => Ok(label - 1),
            _ => Err(Error::data(
                path,
                format!(
                    "line {}: expected a 1-based class index, found {:?}",
                    i + 1,
                    line.trim()
                ),
            )),
        })
        .collect()
}

fn read_split(base: &Path, tables: &[PathBuf], labels: &Path) -> Result<LabeledSet> {
    let labels_path = base.join(labels);
    let labels = read_labels(&labels_path)?;
    let mut columns: Vec<Vec<Vec<f64>>> = Vec::with_capacity(tables.len());
    for table in tables {
        let path = base.join(table);
        let rows = read_table(&path)?;
        if rows.len() != labels.len() {
            return Err(Error::data(
                &path,
                format!(
                    "sample count mismatch: {} rows but {} labels in {}",
                    rows.len(),
                    labels.len(),
                    labels_path.display()
                ),
            ));
        }
        if let Some(first) = rows.first() {
            if let Some(r) = rows.iter().position(|row| row.len() != first.len()) {
                return Err(Error::data(
                    &path,
                    format!(
                        "row {} has {} columns, expected {}",
                        r + 1,
                        rows[r].len(),
                        first.len()
                    ),
                ));
            }
        }
        columns.push(rows);
    }
    let samples = (0..labels.len())
        .map(|i| {
            MultimodalSample::new(columns.iter().map(|m| Array1::from(m[i].clone())).collect())
        })
        .collect();
    Ok(LabeledSet { samples, labels })
}

/// Reads a dataset described by the manifest; relative paths resolve
/// against the manifest's directory.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::data(manifest_path, e.to_string()))?;
    if manifest.modalities.is_empty() {
        return Err(Error::data(manifest_path, "manifest lists no modalities"));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let train_tables: Vec<PathBuf> = manifest
        .modalities
        .iter()
        .map(|m| m.train_csv.clone())
        .collect();
    let test_tables: Vec<PathBuf> = manifest
        .modalities
        .iter()
        .map(|m| m.test_csv.clone())
        .collect();
    let train = read_split(base, &train_tables, &manifest.train_labels_csv)?;
    let test = read_split(base, &test_tables, &manifest.test_labels_csv)?;

    if let (Some(a), Some(b)) = (train.samples.first(), test.samples.first()) {
        if a.dims() != b.dims() {
            return Err(Error::data(
                manifest_path,
                format!(
                    "train dimensions {:?} differ from test {:?}",
                    a.dims(),
                    b.dims()
                ),
            ));
        }
    }
    let num_classes = train
        .labels
        .iter()
        .chain(&test.labels)
        .max()
        .map_or(0, |m| m + 1);
    Ok(Dataset {
        train,
        test,
        num_classes,
    })
}

fn write_table(path: &Path, set: &LabeledSet, modality: usize) -> Result<()> {
    let mut out = String::new();
    for sample in &set.samples {
        let row: Vec<String> = sample
            .modality(modality)
            .iter()
            .map(|v| v.to_string())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let out: String = labels.iter().map(|l| format!("{}\n", l + 1)).collect();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `manifest.json` plus CSV tables into `dir`; returns the manifest path.
/// Floats use the shortest representation that parses back to the same value.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut modalities = Vec::new();
    for s in 0..dataset.num_modalities() {
        let name = format!("modality{}", s + 1);
        let files = ModalityFiles {
            train_csv: PathBuf::from(format!("{name}_train.csv")),
            test_csv: PathBuf::from(format!("{name}_test.csv")),
            name,
        };
        write_table(&dir.join(&files.train_csv), &dataset.train, s)?;
        write_table(&dir.join(&files.test_csv), &dataset.test, s)?;
        modalities.push(files);
    }
    let manifest = Manifest {
        modalities,
        train_labels_csv: PathBuf::from("train_labels.csv"),
        test_labels_csv: PathBuf::from("test_labels.csv"),
    };
    write_labels(&dir.join(&manifest.train_labels_csv), &dataset.train.labels)?;
    write_labels(&dir.join(&manifest.test_labels_csv), &dataset.test.labels)?;
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
