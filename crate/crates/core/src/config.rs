//! Run configuration: one TOML file with dotted keys per module namespace.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::SvmOptions;
use crate::encoding::EncoderConfig;
use crate::error::{Error, Result};
use crate::lbp::LbpConfig;
use crate::load::SamplingGrid;
use crate::raster::ColorPolicy;
use crate::scalespace::ScaleStackConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Lbp,
    #[default]
    Bow,
}

impl std::fmt::Display for Framework {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Framework::Lbp => "lbp",
            Framework::Bow => "bow",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Border {
    #[default]
    Replicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageSection {
    /// Min-max stretch each image before filtering.
    pub enhance: bool,
    pub color: ColorPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GssSection {
    pub base: f64,
    pub count: usize,
    pub border: Border,
}

impl Default for GssSection {
    fn default() -> Self {
        let d = ScaleStackConfig::default();
        Self {
            base: d.base,
            count: d.count,
            border: Border::Replicate,
        }
    }
}

impl GssSection {
    pub fn stack(&self) -> ScaleStackConfig {
        ScaleStackConfig {
            base: self.base,
            count: self.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbpSection {
    pub scales: LbpConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub c: f64,
    pub tol: f64,
    pub max_epochs: usize,
    pub balanced: bool,
    /// Z-score features using training statistics.
    pub standardize: bool,
}

impl Default for SvmSection {
    fn default() -> Self {
        let d = SvmOptions::default();
        Self {
            c: d.c,
            tol: d.tol,
            max_epochs: d.max_epochs,
            balanced: d.balanced,
            standardize: false,
        }
    }
}

impl SvmSection {
    pub fn options(&self) -> SvmOptions {
        SvmOptions {
            c: self.c,
            tol: self.tol,
            max_epochs: self.max_epochs,
            balanced: self.balanced,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub framework: Framework,
    pub seed: u64,
    pub image: ImageSection,
    pub gss: GssSection,
    pub lbp: LbpSection,
    pub load: SamplingGrid,
    pub encode: EncoderConfig,
    pub svm: SvmSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            framework: Framework::Bow,
            seed: 0,
            image: ImageSection::default(),
            gss: GssSection::default(),
            lbp: LbpSection::default(),
            load: SamplingGrid::default(),
            encode: EncoderConfig::default(),
            svm: SvmSection::default(),
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<String>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            _ => out.push(key),
        }
    }
}

fn nearest<'a>(key: &str, known: &'a [String]) -> Option<&'a String> {
    known
        .iter()
        .map(|k| (strsim::jaro_winkler(key, k), k))
        .filter(|(s, _)| *s > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k)
}

impl RunConfig {
    /// Reduced sizes for corpora of a few hundred small images: LOAD stride 4,
    /// PCA 32, GMM 16 and a 20 000 descriptor pool. LBP features are
    /// standardized.
    pub fn desk_scale(framework: Framework) -> Self {
        let mut c = Self {
            framework,
            ..Self::default()
        };
        c.load.stride_x = 4;
        c.load.stride_y = 4;
        c.encode.pca_dim = 32;
        c.encode.gmm_k = 16;
        c.encode.max_pool = 20_000;
        c.svm.standardize = framework == Framework::Lbp;
        c
    }

    /// Every valid dotted key.
    pub fn known_keys() -> Vec<String> {
        let mut keys = Vec::new();
        flatten("", &RunConfig::default().to_table(), &mut keys);
        keys
    }

    fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serializes")
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let mut keys = Vec::new();
        flatten("", &table, &mut keys);
        let known = Self::known_keys();
        if let Some(bad) = keys.iter().find(|k| !known.contains(k)) {
            return Err(Error::UnknownConfigKey {
                key: bad.clone(),
                suggestion: nearest(bad, &known).cloned(),
            });
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let table: toml::Table = s.parse().map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Overrides one dotted key; `value` is read as a TOML literal, or as a
    /// bare string when it does not parse.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let known = Self::known_keys();
        if !known.iter().any(|k| k == key) {
            return Err(Error::UnknownConfigKey {
                key: key.to_string(),
                suggestion: nearest(key, &known).cloned(),
            });
        }
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut table = self.to_table();
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().expect("nonempty key");
        let mut cur = &mut table;
        for p in parts {
            cur = cur
                .get_mut(p)
                .and_then(toml::Value::as_table_mut)
                .expect("known key has table parents");
        }
        // integers are accepted where floats are expected
        let parsed = match (cur.get(leaf), parsed) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        cur.insert(leaf.to_string(), parsed);
        *self = Self::from_table(table)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.gss.stack().validate()?;
        self.lbp.scales.validate()?;
        self.load.validate()?;
        self.encode.validate()?;
        let o = self.svm.options();
        if !(o.c > 0.0 && o.c.is_finite()) {
            return Err(Error::InvalidConfig(format!("svm.c must be positive, got {}", o.c)));
        }
        if !(o.tol > 0.0) || o.max_epochs == 0 {
            return Err(Error::InvalidConfig("svm.tol and svm.max_epochs must be positive".into()));
        }
        Ok(())
    }

    /// Writes `run.json` with every key resolved.
    pub fn write_run_json(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        serde_json::to_writer_pretty(std::fs::File::create(dir.join("run.json"))?, self)?;
        Ok(())
    }

    pub fn from_run_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let cfg: RunConfig = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
