//! End-to-end feature extraction, training and leave-one-specimen-out runs
//! for both frameworks.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{predict, train_svm, FeatureMatrix, Standardizer, SvmModel};
use crate::config::{Framework, RunConfig};
use crate::encoding::EncoderModel;
use crate::error::{Error, Result};
use crate::evaluation::{class_order, run_folds, DatasetManifest, LosoReport};
use crate::lbp::gss_lbp_representation;
use crate::load::{DescriptorSet, LoadExtractor};
use crate::raster::{enhance, load_image, GrayImage};
use crate::scalespace::build_scale_stack;
use crate::seed::{stage_seed, Stage};
use crate::synth::SynthSample;

/// Labels, specimens and class names, aligned with manifest rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub labels: Vec<usize>,
    pub specimens: Vec<String>,
    pub classes: Vec<String>,
}

impl From<&DatasetManifest> for Dataset {
    fn from(m: &DatasetManifest) -> Self {
        Self {
            labels: m.labels(),
            specimens: m.specimens(),
            classes: m.classes().to_vec(),
        }
    }
}

impl Dataset {
    /// Splits generated samples into images and their dataset labels.
    pub fn from_samples(samples: Vec<SynthSample>) -> (Vec<GrayImage>, Self) {
        let classes = class_order(samples.iter().map(|s| s.label.as_str()));
        let mut ds = Self {
            labels: Vec::with_capacity(samples.len()),
            specimens: Vec::with_capacity(samples.len()),
            classes,
        };
        let images = samples
            .into_iter()
            .map(|s| {
                ds.labels.push(ds.classes.iter().position(|c| *c == s.label).expect("class listed"));
                ds.specimens.push(s.specimen);
                s.image
            })
            .collect();
        (images, ds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn preprocess(img: GrayImage, cfg: &RunConfig) -> GrayImage {
    if cfg.image.enhance {
        enhance(&img)
    } else {
        img
    }
}

/// Loads every manifest image, reporting all failures at once.
pub fn load_images(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<Vec<GrayImage>> {
    let loaded: Vec<Result<GrayImage>> = manifest
        .entries()
        .par_iter()
        .map(|e| load_image(&e.path, cfg.image.color).map(|img| preprocess(img, cfg)))
        .collect();
    let mut images = Vec::with_capacity(loaded.len());
    let mut errors = Vec::new();
    for (i, r) in loaded.into_iter().enumerate() {
        match r {
            Ok(img) => images.push(img),
            Err(e) => errors.push(format!("row {} ({}): {e}", i + 1, manifest.entries()[i].path.display())),
        }
    }
    if !errors.is_empty() {
        return Err(Error::ImageBatch {
            count: errors.len(),
            errors,
        });
    }
    Ok(images)
}

/// Concatenated LBP histograms over the scale stack of one image.
pub fn lbp_vector(img: &GrayImage, cfg: &RunConfig) -> Result<Vec<f64>> {
    let stack = build_scale_stack(img, &cfg.gss.stack())?;
    Ok(gss_lbp_representation(&stack, &cfg.lbp.scales)?.into_values())
}

pub fn lbp_features(images: &[GrayImage], ds: &Dataset, cfg: &RunConfig) -> Result<FeatureMatrix> {
    let rows: Vec<Vec<f64>> = images.par_iter().map(|img| lbp_vector(img, cfg)).collect::<Result<_>>()?;
    let dim = (cfg.gss.count + 1) * cfg.lbp.scales.dim();
    log::info!("lbp feature dimension {dim}");
    let mut fm = FeatureMatrix::new(dim, ds.classes.clone());
    for (i, r) in rows.iter().enumerate() {
        fm.push(r, ds.labels[i], ds.specimens[i].clone())?;
    }
    Ok(fm)
}

/// Dense LOAD descriptors pooled over the scale stack of each image.
pub fn descriptor_sets(images: &[GrayImage], cfg: &RunConfig) -> Result<Vec<DescriptorSet>> {
    let extractor = LoadExtractor::new(cfg.load)?;
    images
        .par_iter()
        .map(|img| {
            let stack = build_scale_stack(img, &cfg.gss.stack())?;
            let set = extractor.extract_all(&stack)?;
            if set.is_empty() {
                return Err(Error::ImageTooSmall {
                    width: img.width(),
                    height: img.height(),
                    needed: 2 * cfg.load.radius + 1,
                });
            }
            Ok(set)
        })
        .collect()
}

/// Trained SVM with the class names and optional scaling it was fitted with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub svm: SvmModel,
    pub classes: Vec<String>,
    pub standardizer: Option<Standardizer>,
}

#[derive(Serialize, Deserialize)]
struct ClassifierMeta {
    classes: Vec<String>,
    standardizer: Option<Standardizer>,
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

impl TrainedClassifier {
    pub fn train(train: &FeatureMatrix, cfg: &RunConfig) -> Result<Self> {
        let standardizer = cfg.svm.standardize.then(|| Standardizer::fit(train)).transpose()?;
        let scaled;
        let data = match &standardizer {
            Some(s) => {
                scaled = s.transform(train)?;
                &scaled
            }
            None => train,
        };
        let svm = train_svm(data, &cfg.svm.options(), stage_seed(cfg.seed, Stage::SvmSchedule, 0))?;
        Ok(Self {
            svm,
            classes: train.classes().to_vec(),
            standardizer,
        })
    }

    /// Predicted class id and scores for every row.
    pub fn predict(&self, data: &FeatureMatrix) -> Result<Vec<(usize, Vec<f64>)>> {
        (0..data.rows())
            .map(|i| {
                let mut x = data.row(i).to_vec();
                if let Some(s) = &self.standardizer {
                    s.apply(&mut x)?;
                }
                predict(&self.svm, &x)
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.svm.save(path)?;
        let meta = ClassifierMeta {
            classes: self.classes.clone(),
            standardizer: self.standardizer.clone(),
        };
        serde_json::to_writer(std::fs::File::create(meta_path(path))?, &meta)?;
        Ok(())
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let svm = SvmModel::open(path)?;
        let mp = meta_path(path);
        if !mp.exists() {
            return Err(Error::MissingFile(mp));
        }
        let meta: ClassifierMeta = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(mp)?))?;
        if meta.classes.len() != svm.num_classes() {
            return Err(Error::LengthMismatch(meta.classes.len(), svm.num_classes()));
        }
        Ok(Self {
            svm,
            classes: meta.classes,
            standardizer: meta.standardizer,
        })
    }
}

fn fold_predictions(clf: &TrainedClassifier, test: &FeatureMatrix) -> Result<Vec<usize>> {
    Ok(clf.predict(test)?.into_iter().map(|(l, _)| l).collect())
}

pub fn run_loso_lbp(features: &FeatureMatrix, cfg: &RunConfig) -> Result<LosoReport> {
    run_folds(features.labels(), features.specimens(), features.classes(), |fold| {
        let clf = TrainedClassifier::train(&features.select(&fold.train), cfg)?;
        fold_predictions(&clf, &features.select(&fold.test))
    })
}

/// Encodes `sets` as Fisher vectors into a feature matrix.
pub fn encode_sets(encoder: &EncoderModel, sets: &[&DescriptorSet], idx: &[usize], ds: &Dataset) -> Result<FeatureMatrix> {
    let fvs: Vec<Vec<f64>> = idx
        .par_iter()
        .map(|&i| encoder.encode(sets[i]).map(|f| f.values))
        .collect::<Result<_>>()?;
    let mut fm = FeatureMatrix::new(encoder.output_dim(), ds.classes.clone());
    for (v, &i) in fvs.iter().zip(idx) {
        fm.push(v, ds.labels[i], ds.specimens[i].clone())?;
    }
    Ok(fm)
}

/// Fits the encoder and SVM on training rows only, per fold.
pub fn run_loso_bow(sets: &[&DescriptorSet], ds: &Dataset, cfg: &RunConfig) -> Result<LosoReport> {
    if sets.len() != ds.len() {
        return Err(Error::LengthMismatch(sets.len(), ds.len()));
    }
    run_folds(&ds.labels, &ds.specimens, &ds.classes, |fold| {
        let train_sets: Vec<&DescriptorSet> = fold.train.iter().map(|&i| sets[i]).collect();
        let encoder = EncoderModel::fit(&train_sets, &cfg.encode, cfg.seed)?;
        let train = encode_sets(&encoder, sets, &fold.train, ds)?;
        let test = encode_sets(&encoder, sets, &fold.test, ds)?;
        let clf = TrainedClassifier::train(&train, cfg)?;
        fold_predictions(&clf, &test)
    })
}

/// Full LOSO run for the configured framework.
pub fn run_loso(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<LosoReport> {
    cfg.validate()?;
    let images = load_images(manifest, cfg)?;
    run_loso_images(&images, &Dataset::from(manifest), cfg)
}

pub fn run_loso_images(images: &[GrayImage], ds: &Dataset, cfg: &RunConfig) -> Result<LosoReport> {
    match cfg.framework {
        Framework::Lbp => run_loso_lbp(&lbp_features(images, ds, cfg)?, cfg),
        Framework::Bow => {
            let sets = descriptor_sets(images, cfg)?;
            let refs: Vec<&DescriptorSet> = sets.iter().collect();
            run_loso_bow(&refs, ds, cfg)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// Number of filtered levels.
    Filters(Vec<usize>),
    /// Scale factor between successive sigmas.
    Base(Vec<f64>),
}

impl SweepAxis {
    /// `filters=0..8`, `filters=0,1,7` or `base=1.2,1.4,1.5`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad sweep axis {s:?}; expected filters=A..B, filters=a,b or base=x,y"));
        let (name, list) = s.split_once('=').ok_or_else(bad)?;
        match name.trim() {
            "filters" => {
                if let Some((a, b)) = list.split_once("..") {
                    let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                    if a > b {
                        return Err(bad());
                    }
                    return Ok(SweepAxis::Filters((a..=b).collect()));
                }
                let v = list.split(',').map(|x| x.trim().parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
                Ok(SweepAxis::Filters(v))
            }
            "base" => {
                let v = list.split(',').map(|x| x.trim().parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
                Ok(SweepAxis::Base(v))
            }
            _ => Err(bad()),
        }
    }

    fn settings(&self) -> Vec<f64> {
        let mut v: Vec<f64> = match self {
            SweepAxis::Filters(f) => f.iter().map(|&x| x as f64).collect(),
            SweepAxis::Base(b) => b.clone(),
        };
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    fn name(&self) -> &'static str {
        match self {
            SweepAxis::Filters(_) => "filters",
            SweepAxis::Base(_) => "base",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub setting: f64,
    pub mca_counts: Option<f64>,
    pub mca_foldmean: Option<f64>,
}

/// One LOSO run per setting with a shared seed, sorted by setting.
///
/// Along the filters axis, features are extracted once at the largest count
/// and truncated per setting, since lower levels do not depend on the count.
pub fn sweep(images: &[GrayImage], ds: &Dataset, cfg: &RunConfig, axis: &SweepAxis) -> Result<Vec<SweepRow>> {
    let settings = axis.settings();
    if settings.is_empty() {
        return Err(Error::InvalidConfig("empty sweep axis".into()));
    }
    let row = |setting: f64, r: LosoReport| SweepRow {
        axis: axis.name().to_string(),
        setting,
        mca_counts: r.mca_counts,
        mca_foldmean: r.mca_foldmean,
    };
    let mut rows = Vec::with_capacity(settings.len());
    match axis {
        SweepAxis::Filters(_) => {
            let mut full = cfg.clone();
            full.gss.count = *settings.last().expect("nonempty") as usize;
            full.validate()?;
            match cfg.framework {
                Framework::Lbp => {
                    let fm = lbp_features(images, ds, &full)?;
                    let block = cfg.lbp.scales.dim();
                    for &s in &settings {
                        let mut c = cfg.clone();
                        c.gss.count = s as usize;
                        let dim = (s as usize + 1) * block;
                        let mut sub = FeatureMatrix::new(dim, fm.classes().to_vec());
                        for i in 0..fm.rows() {
                            sub.push(&fm.row(i)[..dim], fm.labels()[i], fm.specimens()[i].clone())?;
                        }
                        log::info!("sweep filters={s}");
                        rows.push(row(s, run_loso_lbp(&sub, &c)?));
                    }
                }
                Framework::Bow => {
                    let sets = descriptor_sets(images, &full)?;
                    for &s in &settings {
                        let mut c = cfg.clone();
                        c.gss.count = s as usize;
                        let subs: Vec<DescriptorSet> = sets.iter().map(|d| d.up_to_level(s as u16)).collect();
                        let refs: Vec<&DescriptorSet> = subs.iter().collect();
                        log::info!("sweep filters={s}");
                        rows.push(row(s, run_loso_bow(&refs, ds, &c)?));
                    }
                }
            }
        }
        SweepAxis::Base(_) => {
            for &s in &settings {
                let mut c = cfg.clone();
                c.gss.base = s;
                c.validate()?;
                log::info!("sweep base={s}");
                rows.push(row(s, run_loso_images(images, ds, &c)?));
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["axis", "setting", "mca_counts", "mca_foldmean"])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in rows {
        w.write_record([r.axis.clone(), r.setting.to_string(), opt(r.mca_counts), opt(r.mca_foldmean)])?;
    }
    w.flush()?;
    Ok(())
}
