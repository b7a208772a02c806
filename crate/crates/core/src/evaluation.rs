//! Dataset manifests, leave-one-specimen-out folds, confusion matrices and
//! mean class accuracy.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CANONICAL_CLASSES: [&str; 6] = [
    "Homogeneous",
    "Speckled",
    "Nucleolar",
    "Centromere",
    "Golgi",
    "Nuclear Membrane",
];

/// Class id order: canonical order when every name is canonical, otherwise
/// sorted unique names.
pub fn class_order<'a>(names: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let unique: BTreeSet<&str> = names.into_iter().collect();
    if unique.iter().all(|n| CANONICAL_CLASSES.contains(n)) {
        CANONICAL_CLASSES
            .iter()
            .filter(|c| unique.contains(*c))
            .map(|c| c.to_string())
            .collect()
    } else {
        unique.into_iter().map(String::from).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
    pub specimen: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    classes: Vec<String>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| e.specimen.trim().is_empty()) {
            return Err(Error::Format {
                what: "manifest",
                reason: format!("empty specimen id for {}", e.path.display()),
            });
        }
        if let Some(e) = entries.iter().find(|e| e.label.trim().is_empty()) {
            return Err(Error::Format {
                what: "manifest",
                reason: format!("empty label for {}", e.path.display()),
            });
        }
        let classes = class_order(entries.iter().map(|e| e.label.as_str()));
        Ok(Self { entries, classes })
    }

    /// Reads a `path,label,specimen` CSV; relative paths resolve against the
    /// manifest's directory.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let base = path.parent().unwrap_or(Path::new(""));
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["path", "label", "specimen"] {
            return Err(Error::Format {
                what: "manifest",
                reason: format!("expected header path,label,specimen, got {}", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut entries = Vec::new();
        for rec in r.deserialize() {
            let mut e: ManifestEntry = rec?;
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
            entries.push(e);
        }
        Self::new(entries)
    }

    /// Writes paths relative to `path`'s directory when possible.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.entries {
            let rel = e.path.strip_prefix(base).unwrap_or(&e.path);
            w.serialize(ManifestEntry {
                path: rel.to_path_buf(),
                label: e.label.clone(),
                specimen: e.specimen.clone(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn labels(&self) -> Vec<usize> {
        self.entries
            .iter()
            .map(|e| self.classes.iter().position(|c| *c == e.label).expect("class listed"))
            .collect()
    }

    pub fn specimens(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.specimen.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub specimen: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per specimen, ordered by specimen id.
pub fn loso_splits(manifest: &DatasetManifest) -> Result<Vec<Fold>> {
    splits_by_specimen(&manifest.specimens())
}

pub fn splits_by_specimen(specimens: &[String]) -> Result<Vec<Fold>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in specimens.iter().enumerate() {
        groups.entry(s.as_str()).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::TooFewSpecimens(groups.len()));
    }
    Ok(groups
        .into_iter()
        .map(|(s, test)| Fold {
            specimen: s.to_string(),
            train: (0..specimens.len()).filter(|i| specimens[*i] != s).collect(),
            test,
        })
        .collect())
}

/// Rows are truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes() != self.num_classes() {
            return Err(Error::LengthMismatch(self.num_classes(), other.num_classes()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Row-normalized percentages; empty rows stay zero.
    pub fn percentages(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|r| {
                let s: u64 = r.iter().sum();
                r.iter()
                    .map(|&c| if s == 0 { 0.0 } else { 100.0 * c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }

    /// Mean per-class recall over the rows that have samples.
    pub fn mca_nonempty(&self) -> Option<f64> {
        let recalls: Vec<f64> = self
            .counts
            .iter()
            .enumerate()
            .filter_map(|(c, r)| {
                let s: u64 = r.iter().sum();
                (s > 0).then(|| r[c] as f64 / s as f64)
            })
            .collect();
        (!recalls.is_empty()).then(|| recalls.iter().sum::<f64>() / recalls.len() as f64)
    }

    /// Row-percentage CSV with class names on both axes.
    pub fn write_percent_csv(&self, path: impl AsRef<Path>, classes: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["truth".to_string()];
        header.extend(classes.iter().cloned());
        w.write_record(&header)?;
        for (c, row) in self.percentages().iter().enumerate() {
            let mut rec = vec![classes.get(c).cloned().unwrap_or_else(|| c.to_string())];
            rec.extend(row.iter().map(|v| format!("{v:.2}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn confusion_matrix(truth: &[usize], pred: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch(truth.len(), pred.len()));
    }
    let mut cm = ConfusionMatrix::zeros(num_classes);
    for (&t, &p) in truth.iter().zip(pred) {
        for label in [t, p] {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange { label, num_classes });
            }
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

/// Mean over classes of per-class recall; every row must be nonempty.
pub fn mca(cm: &ConfusionMatrix) -> Result<f64> {
    if let Some(c) = cm.row_sums().iter().position(|&s| s == 0) {
        return Err(Error::EmptyClass(c));
    }
    cm.mca_nonempty().ok_or(Error::EmptyClass(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub specimen: String,
    pub train_rows: usize,
    pub test_rows: usize,
    pub confusion: Option<ConfusionMatrix>,
    pub mca: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoReport {
    pub classes: Vec<String>,
    pub per_fold: Vec<FoldResult>,
    pub aggregate_confusion: ConfusionMatrix,
    /// Mean class accuracy of the summed fold matrices.
    pub mca_counts: Option<f64>,
    /// Mean of the per-fold accuracies.
    pub mca_foldmean: Option<f64>,
    pub skipped_folds: usize,
}

impl LosoReport {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        serde_json::to_writer_pretty(std::fs::File::create(dir.join("results.json"))?, self)?;
        self.aggregate_confusion
            .write_percent_csv(dir.join("confusion.csv"), &self.classes)
    }
}

/// Runs `fold_fn` on every fold and aggregates its test predictions.
///
/// Folds whose training rows miss a class are skipped with a warning.
pub fn run_folds<F>(labels: &[usize], specimens: &[String], classes: &[String], fold_fn: F) -> Result<LosoReport>
where
    F: Fn(&Fold) -> Result<Vec<usize>> + Sync,
{
    if labels.len() != specimens.len() {
        return Err(Error::LengthMismatch(labels.len(), specimens.len()));
    }
    let k = classes.len();
    let folds = splits_by_specimen(specimens)?;
    let results: Vec<Result<FoldResult>> = folds
        .par_iter()
        .map(|fold| {
            let mut seen = vec![false; k];
            for &i in &fold.train {
                seen[labels[i]] = true;
            }
            let present: BTreeSet<usize> = labels.iter().copied().collect();
            let missing: Vec<&str> = present
                .iter()
                .filter(|&&c| !seen[c])
                .map(|&c| classes[c].as_str())
                .collect();
            let mut res = FoldResult {
                specimen: fold.specimen.clone(),
                train_rows: fold.train.len(),
                test_rows: fold.test.len(),
                confusion: None,
                mca: None,
                skipped: None,
            };
            if !missing.is_empty() {
                let why = format!("training set lacks {}", missing.join(", "));
                log::warn!("fold {}: skipped, {why}", fold.specimen);
                res.skipped = Some(why);
                return Ok(res);
            }
            let pred = fold_fn(fold)?;
            let truth: Vec<usize> = fold.test.iter().map(|&i| labels[i]).collect();
            let cm = confusion_matrix(&truth, &pred, k)?;
            res.mca = cm.mca_nonempty();
            res.confusion = Some(cm);
            Ok(res)
        })
        .collect();

    let mut aggregate = ConfusionMatrix::zeros(k);
    let mut per_fold = Vec::with_capacity(results.len());
    for r in results {
        let r = r?;
        if let Some(cm) = &r.confusion {
            aggregate.add(cm)?;
        }
        per_fold.push(r);
    }
    let fold_mcas: Vec<f64> = per_fold.iter().filter_map(|f| f.mca).collect();
    let skipped_folds = per_fold.iter().filter(|f| f.skipped.is_some()).count();
    Ok(LosoReport {
        classes: classes.to_vec(),
        mca_counts: aggregate.mca_nonempty(),
        mca_foldmean: (!fold_mcas.is_empty()).then(|| fold_mcas.iter().sum::<f64>() / fold_mcas.len() as f64),
        aggregate_confusion: aggregate,
        per_fold,
        skipped_folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(spec: &[(&str, &str)]) -> DatasetManifest {
        DatasetManifest::new(
            spec.iter()
                .enumerate()
                .map(|(i, (l, s))| ManifestEntry {
                    path: PathBuf::from(format!("img{i}.pgm")),
                    label: l.to_string(),
                    specimen: s.to_string(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn class_order_rules() {
        assert_eq!(class_order(["Golgi", "Homogeneous"]), vec!["Homogeneous", "Golgi"]);
        assert_eq!(class_order(["zeta", "alpha", "Golgi"]), vec!["Golgi", "alpha", "zeta"]);
    }

    #[test]
    fn two_specimen_splits() {
        let m = entries(&[("a", "s2"), ("a", "s1"), ("b", "s2"), ("b", "s1"), ("a", "s1"), ("b", "s2")]);
        let folds = loso_splits(&m).unwrap();
        assert_eq!(folds.len(), 2);
        assert_eq!(folds[0].specimen, "s1");
        assert_eq!(folds[0].test, vec![1, 3, 4]);
        assert_eq!(folds[0].train, vec![0, 2, 5]);
        assert!(folds.iter().all(|f| f.train.len() == 3 && f.test.len() == 3));
        assert!(matches!(
            loso_splits(&entries(&[("a", "s"), ("b", "s")])),
            Err(Error::TooFewSpecimens(1))
        ));
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion_matrix(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 1], vec![0, 1]]);
        assert!((mca(&cm).unwrap() - 0.75).abs() < 1e-15);
        let perfect = confusion_matrix(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(mca(&perfect).unwrap(), 1.0);
        for row in cm.percentages() {
            assert!((row.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
        assert!(confusion_matrix(&[0], &[0, 1], 2).is_err());
        assert!(matches!(confusion_matrix(&[0], &[5], 2), Err(Error::LabelOutOfRange { .. })));
        let empty_row = confusion_matrix(&[0], &[0], 2).unwrap();
        assert!(matches!(mca(&empty_row), Err(Error::EmptyClass(1))));
    }

    #[test]
    fn manifest_roundtrip_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::new(vec![ManifestEntry {
            path: dir.path().join("x/a.pgm"),
            label: "Golgi".into(),
            specimen: "7".into(),
        }])
        .unwrap();
        let p = dir.path().join("m.csv");
        m.save(&p).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().contains("x/a.pgm,Golgi,7"));
        assert_eq!(DatasetManifest::open(&p).unwrap(), m);
        std::fs::write(&p, "file,label,specimen\n").unwrap();
        assert!(DatasetManifest::open(&p).is_err());
    }

    #[test]
    fn run_folds_skips_and_aggregates() {
        // one specimen per class: every fold loses its class from training
        let m = entries(&[("a", "s1"), ("b", "s2"), ("c", "s3")]);
        let r = run_folds(&m.labels(), &m.specimens(), m.classes(), |f| Ok(f.test.iter().map(|_| 0).collect())).unwrap();
        assert_eq!(r.skipped_folds, 3);
        assert_eq!(r.mca_counts, None);

        let m = entries(&[("a", "s1"), ("a", "s2"), ("b", "s3"), ("b", "s4")]);
        let labels = m.labels();
        let r = run_folds(&labels, &m.specimens(), m.classes(), |f| Ok(f.test.iter().map(|&i| labels[i]).collect())).unwrap();
        assert_eq!(r.skipped_folds, 0);
        assert_eq!(r.mca_counts, Some(1.0));
        assert_eq!(r.aggregate_confusion.row_sums(), vec![2, 2]);
    }
}
