//! Per-layer activation ingestion, PCA, and difficulty silhouettes.
//!
//! Activation files hold one layer each:
//!
//! ```text
//! "AHAL" | version u16 = 1 | layer u16 | rows u32 | dim u32 | rows*dim f32
//! ```
//!
//! All integers and floats are little-endian; the matrix is row-major. A
//! JSON sidecar `{"labels": [{"task": "kk", "difficulty": 3}, ...]}` aligns
//! with the rows and may carry a `"model"` string.

mod analysis;

pub use analysis::{pca_fit, project, silhouette, spearman, AnalysisError, Pca};

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{Cell, Table};

pub const MAGIC: &[u8; 4] = b"AHAL";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("bad magic {0:?}, expected \"AHAL\"")]
    Magic([u8; 4]),
    #[error("unsupported version {0}")]
    Version(u16),
    #[error("file ends at byte {at}, expected {expected} bytes")]
    Truncated { at: usize, expected: usize },
    #[error("{extra} unexpected bytes after the payload")]
    Trailing { extra: usize },
    #[error("non-finite value in row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("{rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("layers disagree on labels (layer {0})")]
    InconsistentLabels(u16),
    #[error("sidecar: {0}")]
    Sidecar(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub task: String,
    pub difficulty: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub labels: Vec<Label>,
}

/// One layer's last-token activations with per-row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor {
    pub model: Option<String>,
    pub layer: u16,
    pub rows: usize,
    pub dim: usize,
    /// Row-major.
    pub data: Vec<f32>,
    pub labels: Vec<Label>,
}

impl ActivationTensor {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.rows, self.dim, self.data.iter().map(|&v| v as f64))
    }

    fn select(&self, keep: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(keep.len(), self.dim, |i, j| self.data[keep[i] * self.dim + j] as f64)
    }
}

/// Parses the binary payload; returns (layer, rows, dim, data).
pub fn read_activation_payload<R: Read>(mut input: R) -> Result<(u16, usize, usize, Vec<f32>), LatentError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(LatentError::Truncated { at: bytes.len(), expected: HEADER_LEN });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(LatentError::Magic(magic));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(LatentError::Version(version));
    }
    let layer = u16::from_le_bytes(bytes[6..8].try_into().unwrap());
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + rows * dim * 4;
    if bytes.len() < expected {
        return Err(LatentError::Truncated { at: bytes.len(), expected });
    }
    if bytes.len() > expected {
        return Err(LatentError::Trailing { extra: bytes.len() - expected });
    }
    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(LatentError::NonFinite { row: i / dim, col: i % dim });
    }
    Ok((layer, rows, dim, data))
}

pub fn write_activation_payload<W: Write>(mut out: W, t: &ActivationTensor) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&t.layer.to_le_bytes())?;
    out.write_all(&(t.rows as u32).to_le_bytes())?;
    out.write_all(&(t.dim as u32).to_le_bytes())?;
    for v in &t.data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn parse_sidecar(text: &str) -> Result<Sidecar, LatentError> {
    serde_json::from_str(text).map_err(|e| LatentError::Sidecar(e.to_string()))
}

/// Reads an activation file and joins its sidecar labels by row.
pub fn load_activations(file: &Path, sidecar: &Path) -> Result<ActivationTensor, LatentError> {
    let (layer, rows, dim, data) = read_activation_payload(std::io::BufReader::new(std::fs::File::open(file)?))?;
    let side = parse_sidecar(&std::fs::read_to_string(sidecar)?)?;
    if side.labels.len() != rows {
        return Err(LatentError::LabelCount { rows, labels: side.labels.len() });
    }
    Ok(ActivationTensor { model: side.model, layer, rows, dim, data, labels: side.labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepMode {
    /// PCA and silhouette within each task, clusters = difficulty.
    #[default]
    PerTask,
    /// One PCA over all rows, clusters = (task, difficulty).
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerResult {
    pub layer: u16,
    /// Task name, or `"joint"`.
    pub group: String,
    pub silhouette: Option<f64>,
    pub evr1: Option<f64>,
    pub evr2: Option<f64>,
    pub pc2: Vec<f64>,
    /// Row index into the layer tensor for each PC2 value.
    pub rows: Vec<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatentReport {
    /// Sorted by (group, layer).
    pub layers: Vec<LayerResult>,
}

impl LatentReport {
    /// Layer indices and silhouettes of one group, skipping failed layers.
    pub fn series(&self, group: &str) -> (Vec<f64>, Vec<f64>) {
        self.layers
            .iter()
            .filter(|r| r.group == group)
            .filter_map(|r| r.silhouette.map(|s| (r.layer as f64, s)))
            .unzip()
    }
}

fn analyse(t: &ActivationTensor, group: String, keep: Vec<usize>, labels: Vec<Label>) -> LayerResult {
    let mut result = LayerResult {
        layer: t.layer,
        group,
        silhouette: None,
        evr1: None,
        evr2: None,
        pc2: Vec::new(),
        rows: keep.clone(),
        error: None,
    };
    let x = t.select(&keep);
    let outcome = pca_fit(&x, 2).and_then(|p| {
        let y = project(&x, &p)?;
        let pc2: Vec<f64> = y.column(1).iter().copied().collect();
        let s = silhouette(&pc2, &labels)?;
        Ok((p, pc2, s))
    });
    match outcome {
        Ok((p, pc2, s)) => {
            let evr = p.explained_variance_ratio();
            result.evr1 = Some(evr[0]);
            result.evr2 = Some(evr[1]);
            result.pc2 = pc2;
            result.silhouette = Some(s);
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}

/// Runs PCA (k = 2) and the PC2 difficulty silhouette for every layer.
/// A failing layer records its error and does not stop the others.
pub fn layer_sweep(layers: &[ActivationTensor], mode: SweepMode) -> Result<LatentReport, LatentError> {
    for t in layers {
        if t.labels.len() != t.rows {
            return Err(LatentError::LabelCount { rows: t.rows, labels: t.labels.len() });
        }
        if t.labels != layers[0].labels {
            return Err(LatentError::InconsistentLabels(t.layer));
        }
    }
    let mut results: Vec<LayerResult> = layers
        .par_iter()
        .flat_map_iter(|t| -> Vec<LayerResult> {
            match mode {
                SweepMode::Joint => {
                    vec![analyse(t, "joint".into(), (0..t.rows).collect(), t.labels.clone())]
                }
                SweepMode::PerTask => {
                    let mut by_task: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
                    for (i, l) in t.labels.iter().enumerate() {
                        by_task.entry(l.task.as_str()).or_default().push(i);
                    }
                    by_task
                        .into_iter()
                        .map(|(task, keep)| {
                            let labels = keep
                                .iter()
                                .map(|&i| Label { task: String::new(), difficulty: t.labels[i].difficulty })
                                .collect();
                            analyse(t, task.to_string(), keep, labels)
                        })
                        .collect()
                }
            }
        })
        .collect();
    results.sort_by(|a, b| a.group.cmp(&b.group).then(a.layer.cmp(&b.layer)));
    Ok(LatentReport { layers: results })
}

/// `(group, layer, S, evr1, evr2, error)` rows.
pub fn silhouette_table(report: &LatentReport) -> Table {
    let mut table = Table::new(["group", "layer", "silhouette", "evr1", "evr2", "error"]);
    for r in &report.layers {
        table.push(vec![
            Cell::from(r.group.as_str()),
            Cell::Int(r.layer as i64),
            Cell::from(r.silhouette),
            Cell::from(r.evr1),
            Cell::from(r.evr2),
            Cell::from(r.error.clone().unwrap_or_default()),
        ]);
    }
    table
}

/// Per-sample PC2 coordinates, for scatter plots.
pub fn projection_table(report: &LatentReport, layers: &[ActivationTensor]) -> Table {
    let by_layer: BTreeMap<u16, &ActivationTensor> = layers.iter().map(|t| (t.layer, t)).collect();
    let mut table = Table::new(["group", "layer", "row", "task", "difficulty", "pc2"]);
    for r in &report.layers {
        let t = by_layer[&r.layer];
        for (row, v) in r.rows.iter().zip(&r.pc2) {
            let l = &t.labels[*row];
            table.push(vec![
                Cell::from(r.group.as_str()),
                Cell::Int(r.layer as i64),
                Cell::Int(*row as i64),
                Cell::from(l.task.as_str()),
                Cell::Int(l.difficulty as i64),
                Cell::Float(*v),
            ]);
        }
    }
    table
}
