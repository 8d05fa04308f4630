//! Dataset bundles: a directory holding `index.json` plus one atom CSV per shape.
//!
//! Atom files have columns `cx,cy[,cz],tx,ty[,tz]`; floats are written in
//! their shortest round-tripping form so bundles reload bitwise.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ShapeAtoms;

pub const INDEX_FILE: &str = "index.json";
const ATOMS_DIR: &str = "atoms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_label: Option<usize>,
    #[serde(default)]
    pub meta: BTreeMap<String, f64>,
    pub atoms: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    pub dim: usize,
    pub shapes: Vec<IndexEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

/// Shapes with ids, optional planted labels and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub ids: Vec<String>,
    pub true_labels: Vec<Option<usize>>,
    pub shapes: Vec<ShapeAtoms>,
}

impl Dataset {
    pub fn new(entries: Vec<(String, Option<usize>, ShapeAtoms)>) -> Result<Self> {
        let first = entries.first().ok_or(Error::EmptyInput)?;
        let dim = first.2.dim();
        let mut seen = HashSet::new();
        let mut ds = Dataset {
            dim,
            ids: Vec::new(),
            true_labels: Vec::new(),
            shapes: Vec::new(),
        };
        for (id, truth, shape) in entries {
            if shape.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: shape.dim(),
                });
            }
            if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
                return Err(Error::Validation(format!("invalid shape id {id:?}")));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::Validation(format!("duplicate shape id {id:?}")));
            }
            ds.ids.push(id);
            ds.true_labels.push(truth);
            ds.shapes.push(shape);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    /// Planted labels, if every shape has one.
    pub fn truth(&self) -> Option<Vec<usize>> {
        self.true_labels.iter().copied().collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            dim: self.dim,
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            true_labels: indices.iter().map(|&i| self.true_labels[i]).collect(),
            shapes: indices.iter().map(|&i| self.shapes[i].clone()).collect(),
        }
    }

    pub fn write(&self, dir: &Path, manifest: Option<serde_json::Value>) -> Result<()> {
        let atoms_dir = dir.join(ATOMS_DIR);
        fs::create_dir_all(&atoms_dir).map_err(|e| Error::io(&atoms_dir, e))?;
        let mut entries = Vec::with_capacity(self.len());
        for ((id, truth), shape) in self.ids.iter().zip(&self.true_labels).zip(&self.shapes) {
            let rel = format!("{ATOMS_DIR}/{id}.csv");
            let path = dir.join(&rel);
            fs::write(&path, atoms_to_csv(shape)).map_err(|e| Error::io(&path, e))?;
            entries.push(IndexEntry {
                id: id.clone(),
                label: shape.label().map(str::to_string),
                true_label: *truth,
                meta: shape.meta().clone(),
                atoms: rel,
            });
        }
        let index = Index {
            dim: self.dim,
            shapes: entries,
            manifest,
        };
        let path = dir.join(INDEX_FILE);
        let text = serde_json::to_string_pretty(&index)? + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(INDEX_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index: Index = serde_json::from_str(&text).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let entries = index
            .shapes
            .into_iter()
            .map(|entry| {
                let path: PathBuf = dir.join(&entry.atoms);
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let mut shape = atoms_from_csv(&text, index.dim, &path.display().to_string())?
                    .with_meta_map(entry.meta);
                if let Some(label) = entry.label {
                    shape = shape.with_label(label);
                }
                Ok((entry.id, entry.true_label, shape))
            })
            .collect::<Result<Vec<_>>>()?;
        let ds = Dataset::new(entries)?;
        if ds.dim != index.dim {
            return Err(Error::DimensionMismatch {
                expected: index.dim,
                found: ds.dim,
            });
        }
        Ok(ds)
    }
}

pub fn atoms_to_csv(shape: &ShapeAtoms) -> String {
    let d = shape.dim();
    let mut out = String::from(if d == 2 { "cx,cy,tx,ty\n" } else { "cx,cy,cz,tx,ty,tz\n" });
    for (c, t) in shape.centers().iter().zip(shape.taus()) {
        let fields: Vec<String> = c[..d].iter().chain(&t[..d]).map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}

pub fn atoms_from_csv(text: &str, dim: usize, name: &str) -> Result<ShapeAtoms> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut centers = Vec::new();
    let mut taus = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            source_name: name.to_string(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 * dim {
            return Err(Error::Parse {
                source_name: name.to_string(),
                line,
                message: format!("expected {} columns, found {}", 2 * dim, record.len()),
            });
        }
        let vals = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    source_name: name.to_string(),
                    line,
                    message: format!("{f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut c = [0.0; 3];
        let mut t = [0.0; 3];
        c[..dim].copy_from_slice(&vals[..dim]);
        t[..dim].copy_from_slice(&vals[dim..]);
        centers.push(c);
        taus.push(t);
    }
    ShapeAtoms::new(dim, centers, taus)
}
