//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{Framework, RunConfig};
use crate::classifier::FeatureMatrix;
use crate::encoding::EncoderModel;
use crate::error::{Error, Result};
use crate::evaluation::{DatasetManifest, ManifestEntry};
use crate::load::DescriptorSet;
use crate::pipeline::{self, Dataset, SweepAxis, TrainedClassifier};
use crate::raster::{enhance, save_image, BitDepth, SampleScale};
use crate::scalespace::build_scale_stack;
use crate::synth::{write_corpus, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "hep2-gss", version, about = "Gaussian scale-space texture features, encoding and LOSO evaluation")]
pub struct Cli {
    /// TOML config with dotted keys (gss.*, lbp.*, load.*, encode.*, svm.*).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum)]
    pub framework: Option<Framework>,
    /// Override a config key, e.g. `--set gss.count=3`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ManifestArg {
    /// CSV with header `path,label,specimen`.
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic six-class corpus and its manifest.
    Synth {
        #[arg(long, default_value_t = 50)]
        per_class: usize,
        #[arg(long, default_value_t = 5)]
        specimens: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Noise standard deviation relative to the pattern amplitude.
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
    /// Write every scale-stack level of every image as a 16-bit PGM.
    Preprocess(ManifestArg),
    /// Extract GSS-LBP feature vectors or per-image LOAD descriptor files.
    Extract(ManifestArg),
    /// Fit PCA and GMM codebooks on extracted descriptors.
    FitEncoder {
        /// Directory written by `extract` with the bow framework.
        #[arg(long)]
        descriptors: PathBuf,
        #[arg(long)]
        pca_dim: Option<usize>,
        #[arg(long)]
        gmm_k: Option<usize>,
        #[arg(long)]
        codebooks: Option<usize>,
    },
    /// Encode descriptor files as Fisher vectors.
    Encode {
        #[arg(long)]
        descriptors: PathBuf,
        #[arg(long)]
        encoder: PathBuf,
    },
    /// Train the linear SVM on a feature file.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        c: Option<f64>,
    },
    /// Predict classes for a feature file.
    Predict {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Leave-one-specimen-out evaluation.
    Loso(ManifestArg),
    /// One LOSO run per setting of a scale-space parameter.
    Sweep {
        #[command(flatten)]
        manifest: ManifestArg,
        /// `filters=0..8`, `filters=0,1,7` or `base=1.2,1.4,1.5`.
        #[arg(long, default_value = "filters=0..8")]
        axis: String,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) if p.extension().is_some_and(|e| e == "json") => RunConfig::from_run_json(p)?,
        Some(p) => RunConfig::open(p)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override {o:?} is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(f) = cli.framework {
        cfg.framework = f;
    }
    match &cli.command {
        Command::FitEncoder {
            pca_dim,
            gmm_k,
            codebooks,
            ..
        } => {
            cfg.encode.pca_dim = pca_dim.unwrap_or(cfg.encode.pca_dim);
            cfg.encode.gmm_k = gmm_k.unwrap_or(cfg.encode.gmm_k);
            cfg.encode.codebooks = codebooks.unwrap_or(cfg.encode.codebooks);
        }
        Command::Train { c: Some(c), .. } => cfg.svm.c = *c,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn descriptor_file(dir: &Path, row: usize) -> PathBuf {
    dir.join(format!("{row:05}.desc"))
}

fn read_descriptor_dir(dir: &Path) -> Result<(DatasetManifest, Vec<DescriptorSet>)> {
    let manifest = DatasetManifest::open(dir.join("manifest.csv"))?;
    let sets = (0..manifest.len())
        .into_par_iter()
        .map(|i| DescriptorSet::open(descriptor_file(dir, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, sets))
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    if let Some(n) = cli.jobs {
        // fails only if a pool already exists, e.g. when called twice in-process
        if rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().is_err() {
            log::debug!("rayon pool already initialized");
        }
    }
    let out = &cli.out;
    std::fs::create_dir_all(out)?;
    cfg.write_run_json(out)?;

    match &cli.command {
        Command::Synth {
            per_class,
            specimens,
            size,
            noise,
        } => {
            let sc = SynthConfig {
                per_class: *per_class,
                specimens_per_class: *specimens,
                size: *size,
                noise: *noise,
                seed: cfg.seed,
            };
            let m = write_corpus(out, &sc)?;
            log::info!("wrote {} images to {}", m.len(), out.display());
        }
        Command::Preprocess(a) => {
            let manifest = DatasetManifest::open(&a.manifest)?;
            let images = pipeline::load_images(&manifest, &cfg)?;
            let dir = out.join("levels");
            std::fs::create_dir_all(&dir)?;
            images
                .par_iter()
                .enumerate()
                .try_for_each(|(i, img)| -> Result<()> {
                    let stack = build_scale_stack(img, &cfg.gss.stack())?;
                    for (l, level) in stack.levels().iter().enumerate() {
                        let path = dir.join(format!("{i:05}_L{l}.pgm"));
                        save_image(&enhance(level), path, BitDepth::Sixteen, SampleScale::Unit)?;
                    }
                    Ok(())
                })?;
            log::info!("wrote {} stacks of {} levels", images.len(), cfg.gss.count + 1);
        }
        Command::Extract(a) => {
            let manifest = DatasetManifest::open(&a.manifest)?;
            let images = pipeline::load_images(&manifest, &cfg)?;
            let ds = Dataset::from(&manifest);
            match cfg.framework {
                Framework::Lbp => {
                    let fm = pipeline::lbp_features(&images, &ds, &cfg)?;
                    fm.save(out.join("features.bin"))?;
                    log::info!("wrote {} x {} features", fm.rows(), fm.dim());
                }
                Framework::Bow => {
                    let dir = out.join("descriptors");
                    std::fs::create_dir_all(&dir)?;
                    let sets = pipeline::descriptor_sets(&images, &cfg)?;
                    sets.par_iter()
                        .enumerate()
                        .try_for_each(|(i, s)| s.save(descriptor_file(&dir, i)))?;
                    let entries: Vec<ManifestEntry> = manifest
                        .entries()
                        .iter()
                        .map(|e| ManifestEntry {
                            path: std::path::absolute(&e.path).unwrap_or_else(|_| e.path.clone()),
                            ..e.clone()
                        })
                        .collect();
                    DatasetManifest::new(entries)?.save(dir.join("manifest.csv"))?;
                    let total: usize = sets.iter().map(DescriptorSet::len).sum();
                    log::info!("wrote {total} descriptors for {} images", sets.len());
                }
            }
        }
        Command::FitEncoder { descriptors, .. } => {
            let (_, sets) = read_descriptor_dir(descriptors)?;
            let refs: Vec<&DescriptorSet> = sets.iter().collect();
            let enc = EncoderModel::fit(&refs, &cfg.encode, cfg.seed)?;
            enc.save(out.join("encoder.bin"))?;
            log::info!("encoder output dimension {}", enc.output_dim());
        }
        Command::Encode { descriptors, encoder } => {
            let (manifest, sets) = read_descriptor_dir(descriptors)?;
            let enc = EncoderModel::open(encoder)?;
            let refs: Vec<&DescriptorSet> = sets.iter().collect();
            let idx: Vec<usize> = (0..sets.len()).collect();
            let fm = pipeline::encode_sets(&enc, &refs, &idx, &Dataset::from(&manifest))?;
            fm.save(out.join("features.bin"))?;
            log::info!("wrote {} x {} features", fm.rows(), fm.dim());
        }
        Command::Train { features, .. } => {
            let fm = FeatureMatrix::open(features)?;
            let clf = TrainedClassifier::train(&fm, &cfg)?;
            clf.save(out.join("model.svm"))?;
            let acc = clf
                .predict(&fm)?
                .iter()
                .zip(fm.labels())
                .filter(|((p, _), t)| p == *t)
                .count() as f64
                / fm.rows() as f64;
            log::info!("training accuracy {:.4}", acc);
        }
        Command::Predict { features, model } => {
            let fm = FeatureMatrix::open(features)?;
            let clf = TrainedClassifier::open(model)?;
            let preds = clf.predict(&fm)?;
            let mut w = csv::Writer::from_path(out.join("predictions.csv"))?;
            let mut header = vec!["row".to_string(), "truth".into(), "predicted".into()];
            header.extend(clf.classes.iter().map(|c| format!("score_{c}")));
            w.write_record(&header)?;
            for (i, (p, scores)) in preds.iter().enumerate() {
                let mut rec = vec![
                    i.to_string(),
                    fm.classes()[fm.labels()[i]].clone(),
                    clf.classes[*p].clone(),
                ];
                rec.extend(scores.iter().map(|s| format!("{s:.6}")));
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        Command::Loso(a) => {
            let manifest = DatasetManifest::open(&a.manifest)?;
            let report = pipeline::run_loso(&manifest, &cfg)?;
            report.write(out)?;
            log::info!(
                "{} folds ({} skipped), mca {:?}, fold-mean mca {:?}",
                report.per_fold.len(),
                report.skipped_folds,
                report.mca_counts,
                report.mca_foldmean
            );
        }
        Command::Sweep { manifest, axis } => {
            let axis = SweepAxis::parse(axis)?;
            let m = DatasetManifest::open(&manifest.manifest)?;
            let images = pipeline::load_images(&m, &cfg)?;
            let rows = pipeline::sweep(&images, &Dataset::from(&m), &cfg, &axis)?;
            pipeline::write_sweep_csv(&rows, out.join("sweep.csv"))?;
            for r in &rows {
                log::info!("{}={} mca {:?}", r.axis, r.setting, r.mca_counts);
            }
        }
    }
    Ok(())
}
