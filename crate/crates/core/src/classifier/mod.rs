//! Feature matrices and the linear one-vs-rest SVM.

mod standardize;
mod svm;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub use standardize::Standardizer;
pub use svm::{predict, train_binary, train_svm, train_svm_traced, BinaryTrace, SvmModel, SvmOptions};

use crate::binio::{expect_magic, read_f64s, read_u32, read_u64, write_f64s, write_u32, write_u64};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GSSFEAT\0";

/// Row-major feature vectors with per-row class id and specimen id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    dim: usize,
    values: Vec<f64>,
    labels: Vec<usize>,
    specimens: Vec<String>,
    classes: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(dim: usize, classes: Vec<String>) -> Self {
        Self {
            dim,
            classes,
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: &[f64], label: usize, specimen: impl Into<String>) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        if label >= self.classes.len() {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: self.classes.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature row"));
        }
        self.values.extend_from_slice(row);
        self.labels.push(label);
        self.specimens.push(specimen.into());
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn specimens(&self) -> &[String] {
        &self.specimens
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// New matrix holding the given rows, in order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut out = Self::new(self.dim, self.classes.clone());
        for &i in idx {
            out.values.extend_from_slice(self.row(i));
            out.labels.push(self.labels[i]);
            out.specimens.push(self.specimens[i].clone());
        }
        out
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Binary values file plus a `<path>.labels.csv` sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(MAGIC)?;
        write_u32(&mut w, self.dim as u32)?;
        write_u64(&mut w, self.rows() as u64)?;
        write_f64s(&mut w, &self.values)?;
        w.flush()?;
        self.write_labels(labels_path(path))
    }

    /// Reads a binary feature file, or the CSV fallback when the extension is `.csv`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            return Self::read_csv(path);
        }
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        expect_magic(&mut r, MAGIC, "feature file")?;
        let dim = read_u32(&mut r)? as usize;
        let rows = read_u64(&mut r)? as usize;
        let values = read_f64s(&mut r, dim * rows)?;
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Format {
                what: "feature file",
                reason: "trailing bytes".into(),
            });
        }
        let (labels, specimens) = read_label_rows(labels_path(path))?;
        if labels.len() != rows {
            return Err(Error::LengthMismatch(rows, labels.len()));
        }
        let classes = crate::evaluation::class_order(labels.iter().map(String::as_str));
        let mut m = Self::new(dim, classes);
        for (i, (l, s)) in labels.iter().zip(specimens).enumerate() {
            let id = m.class_id(l).expect("class listed");
            m.push(&values[i * dim..(i + 1) * dim], id, s)?;
        }
        Ok(m)
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// CSV with header `label,specimen,f0,f1,...`.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["label".to_string(), "specimen".to_string()];
        header.extend((0..self.dim).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        for i in 0..self.rows() {
            let mut rec = vec![self.classes[self.labels[i]].clone(), self.specimens[i].clone()];
            rec.extend(self.row(i).iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut names = Vec::new();
        let mut specimens = Vec::new();
        let mut values = Vec::new();
        let mut dim = None;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() < 3 {
                return Err(Error::Format {
                    what: "feature csv",
                    reason: "expected label, specimen and at least one feature".into(),
                });
            }
            let d = rec.len() - 2;
            if *dim.get_or_insert(d) != d {
                return Err(Error::DimensionMismatch {
                    expected: dim.unwrap_or(d),
                    actual: d,
                });
            }
            names.push(rec[0].to_string());
            specimens.push(rec[1].to_string());
            for f in rec.iter().skip(2) {
                values.push(f.trim().parse::<f64>().map_err(|e| Error::Format {
                    what: "feature csv",
                    reason: format!("{f:?}: {e}"),
                })?);
            }
        }
        let dim = dim.ok_or(Error::Format {
            what: "feature csv",
            reason: "no rows".into(),
        })?;
        let classes = crate::evaluation::class_order(names.iter().map(String::as_str));
        let mut m = Self::new(dim, classes);
        for (i, (l, s)) in names.iter().zip(specimens).enumerate() {
            let id = m.class_id(l).expect("class listed");
            m.push(&values[i * dim..(i + 1) * dim], id, s)?;
        }
        Ok(m)
    }

    fn write_labels(&self, path: PathBuf) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["label", "specimen"])?;
        for (l, s) in self.labels.iter().zip(&self.specimens) {
            w.write_record([self.classes[*l].as_str(), s.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn labels_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels.csv");
    PathBuf::from(s)
}

fn read_label_rows(path: PathBuf) -> Result<(Vec<String>, Vec<String>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut labels = Vec::new();
    let mut specimens = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        labels.push(rec.get(0).unwrap_or_default().to_string());
        specimens.push(rec.get(1).unwrap_or_default().to_string());
    }
    Ok((labels, specimens))
}
