use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fisher::{FisherAccumulator, FisherOptions, FisherVector};
use super::gmm::{fit_gmm, GmmModel, GmmOptions};
use super::pca::{fit_pca, PcaModel};
use super::Pool;
use crate::binio::{expect_magic, read_f64s, read_u32, write_f64s, write_u32};
use crate::error::{Error, Result};
use crate::load::DescriptorSet;
use crate::seed::{stage_rng, stage_seed, Stage};

const MAGIC: &[u8; 8] = b"GSSENC\0\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub pca_dim: usize,
    pub gmm_k: usize,
    pub codebooks: usize,
    /// Cap on the number of descriptors pooled for fitting.
    pub max_pool: usize,
    pub power: f64,
    pub gmm_max_iter: usize,
    pub gmm_tol: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            pca_dim: 100,
            gmm_k: 256,
            codebooks: 1,
            max_pool: 1_000_000,
            power: 0.5,
            gmm_max_iter: 100,
            gmm_tol: 1e-5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("encode.{m}")));
        if self.pca_dim == 0 {
            return bad("pca_dim must be positive");
        }
        if self.gmm_k == 0 {
            return bad("gmm_k must be positive");
        }
        if self.codebooks == 0 {
            return bad("codebooks must be positive");
        }
        if self.max_pool == 0 {
            return bad("max_pool must be positive");
        }
        if !(self.power > 0.0 && self.power <= 1.0) {
            return bad("power must be in (0, 1]");
        }
        if self.gmm_max_iter == 0 || !(self.gmm_tol >= 0.0) {
            return bad("gmm_max_iter must be positive and gmm_tol non-negative");
        }
        Ok(())
    }

    /// Length of the encoded vector.
    pub fn output_dim(&self) -> usize {
        2 * self.pca_dim * self.gmm_k * self.codebooks
    }

    fn gmm_options(&self) -> GmmOptions {
        GmmOptions {
            max_iter: self.gmm_max_iter,
            tol: self.gmm_tol,
            ..GmmOptions::new(self.gmm_k)
        }
    }
}

/// Fitted PCA plus one or more GMM codebooks sharing it.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    config: EncoderConfig,
    pca: PcaModel,
    gmms: Vec<GmmModel>,
}

impl EncoderModel {
    pub fn new(config: EncoderConfig, pca: PcaModel, gmms: Vec<GmmModel>) -> Result<Self> {
        config.validate()?;
        if pca.out_dim() != config.pca_dim || gmms.len() != config.codebooks {
            return Err(Error::InvalidConfig("encoder parts disagree with config".into()));
        }
        if gmms.iter().any(|g| g.dim() != pca.out_dim() || g.components() != config.gmm_k) {
            return Err(Error::InvalidConfig("gmm shape disagrees with config".into()));
        }
        Ok(Self { config, pca, gmms })
    }

    /// Fits PCA and the codebooks on a seeded subsample of `train`.
    pub fn fit(train: &[&DescriptorSet], config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if train.iter().all(|s| s.is_empty()) {
            return Err(Error::EmptyDescriptorSet);
        }
        let mut rng = stage_rng(seed, Stage::PoolSubsample);
        let pool = Pool::subsample(train, config.max_pool, &mut rng)?;
        log::info!("encoder: fitting on {} of {} descriptors", pool.len(), train.iter().map(|s| s.len()).sum::<usize>());
        let pca = fit_pca(&pool, config.pca_dim)?;
        let projected = pca.transform(&pool)?;
        drop(pool);
        let opts = config.gmm_options();
        let mut gmms = Vec::with_capacity(config.codebooks);
        for c in 0..config.codebooks {
            let fit = fit_gmm(&projected, &opts, stage_seed(seed, Stage::GmmInit, c as u64))?;
            if !fit.converged {
                log::warn!("gmm {c}: stopped after {} iterations", opts.max_iter);
            }
            gmms.push(fit.model);
        }
        Ok(Self {
            config: config.clone(),
            pca,
            gmms,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn pca(&self) -> &PcaModel {
        &self.pca
    }

    pub fn gmms(&self) -> &[GmmModel] {
        &self.gmms
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    /// Improved Fisher vector of one image; codebooks are normalized
    /// separately, concatenated and rescaled to unit norm.
    pub fn encode(&self, set: &DescriptorSet) -> Result<FisherVector> {
        if set.is_empty() {
            return Err(Error::EmptyDescriptorSet);
        }
        let projected = self.pca.transform(&Pool::from_set(set))?;
        let opts = FisherOptions { power: self.config.power };
        let mut values = Vec::with_capacity(self.output_dim());
        for g in &self.gmms {
            let mut acc = FisherAccumulator::new(g);
            acc.push_pool(&projected)?;
            values.extend(acc.finish(&opts)?.values);
        }
        if self.gmms.len() > 1 {
            let s = 1.0 / (self.gmms.len() as f64).sqrt();
            values.iter_mut().for_each(|v| *v *= s);
        }
        Ok(FisherVector { values })
    }

    pub fn encode_all(&self, sets: &[DescriptorSet]) -> Result<Vec<FisherVector>> {
        sets.par_iter().map(|s| self.encode(s)).collect()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u32(&mut w, VERSION)?;
        write_u32(&mut w, self.pca.in_dim() as u32)?;
        write_u32(&mut w, self.pca.out_dim() as u32)?;
        write_f64s(&mut w, self.pca.mean())?;
        write_f64s(&mut w, self.pca.basis().as_slice())?;
        write_f64s(&mut w, self.pca.eigenvalues())?;
        write_u32(&mut w, self.gmms.len() as u32)?;
        for g in &self.gmms {
            write_u32(&mut w, g.components() as u32)?;
            write_u32(&mut w, g.dim() as u32)?;
            write_f64s(&mut w, g.weights())?;
            write_f64s(&mut w, g.means())?;
            write_f64s(&mut w, g.variances())?;
        }
        let echo = serde_json::to_vec(&self.config)?;
        write_u32(&mut w, echo.len() as u32)?;
        w.write_all(&echo)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        expect_magic(&mut r, MAGIC, "encoder model")?;
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format {
                what: "encoder model",
                reason: format!("unsupported version {version}"),
            });
        }
        let in_dim = read_u32(&mut r)? as usize;
        let out_dim = read_u32(&mut r)? as usize;
        let mean = read_f64s(&mut r, in_dim)?;
        let basis = DMatrix::from_vec(in_dim, out_dim, read_f64s(&mut r, in_dim * out_dim)?);
        let eigenvalues = read_f64s(&mut r, out_dim)?;
        let mut pca = PcaModel::from_parts(mean, basis)?;
        pca.eigenvalues = eigenvalues;
        let count = read_u32(&mut r)? as usize;
        let mut gmms = Vec::with_capacity(count);
        for _ in 0..count {
            let k = read_u32(&mut r)? as usize;
            let dim = read_u32(&mut r)? as usize;
            let weights = read_f64s(&mut r, k)?;
            let means = read_f64s(&mut r, k * dim)?;
            let variances = read_f64s(&mut r, k * dim)?;
            gmms.push(GmmModel::new(dim, weights, means, variances)?);
        }
        let len = read_u32(&mut r)? as usize;
        let mut echo = vec![0u8; len];
        r.read_exact(&mut echo)?;
        let config: EncoderConfig = serde_json::from_slice(&echo)?;
        Self::new(config, pca, gmms)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
