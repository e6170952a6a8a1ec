use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{EmbeddingConfig, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::gnn::{Backbone, TrainConfig};
use crate::graph::TextRegime;
use crate::llm::{RemoteConfig, DEFAULT_MODEL};
use crate::prompt::PromptOptions;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    #[default]
    Single,
    Da,
    Pt,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Single => "single",
            Protocol::Da => "da",
            Protocol::Pt => "pt",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    #[default]
    Low,
    High,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub kind: SplitKind,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub ratios: (f64, f64, f64),
    /// Validation share of target nodes under domain adaptation.
    pub da_val_frac: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            kind: SplitKind::Low,
            train_per_class: 20,
            val_per_class: 30,
            ratios: (0.6, 0.2, 0.2),
            da_val_frac: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    /// Edge list, whitespace or comma separated.
    pub edges: PathBuf,
    /// Node table with `node_id,label[,text]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<PathBuf>,
    /// Numeric feature table: id, values, optional trailing label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_features: Option<PathBuf>,
    pub graph_type: String,
    pub node_type: String,
    pub edge_type: String,
    #[serde(default)]
    pub class_names: Vec<String>,
    /// Inferred from the node table when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_regime: Option<TextRegime>,
    #[serde(default)]
    pub split: SplitConfig,
}

impl DatasetConfig {
    fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        std::iter::once(&self.edges)
            .chain(self.nodes.as_ref())
            .chain(self.raw_features.as_ref())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmBackendKind {
    #[default]
    Mock,
    Remote,
}

impl FromStr for LlmBackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(LlmBackendKind::Mock),
            "remote" => Ok(LlmBackendKind::Remote),
            other => Err(Error::Config(format!("unknown backend '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub backend: LlmBackendKind,
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub concurrency: usize,
    pub remote: RemoteConfig,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            backend: LlmBackendKind::Mock,
            model: DEFAULT_MODEL.into(),
            max_tokens: 512,
            temperature: 0.0,
            concurrency: 8,
            remote: RemoteConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderBackendKind {
    #[default]
    Hashed,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSettings {
    pub backend: EncoderBackendKind,
    /// Width of hashed embeddings; remote widths come from the service.
    pub dim: usize,
    pub seed: u64,
    pub remote: EmbeddingConfig,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        EncoderSettings {
            backend: EncoderBackendKind::Hashed,
            dim: DEFAULT_DIM,
            seed: 0,
            remote: EmbeddingConfig::default(),
        }
    }
}

/// One column of node features to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FeatureChoice {
    /// Encoded generated descriptions.
    Tans,
    /// Encoded original node texts.
    OriginalText,
    /// The dataset's numeric feature table.
    Raw,
    Baseline(FeatureKind),
}

const CHOICES: [(&str, FeatureChoice, &str); 9] = [
    ("tans", FeatureChoice::Tans, "TANS"),
    ("original_text", FeatureChoice::OriginalText, "Text"),
    ("raw", FeatureChoice::Raw, "Raw"),
    ("identity_onehot", FeatureChoice::Baseline(FeatureKind::IdentityOnehot), "One-hot id"),
    ("degree_onehot", FeatureChoice::Baseline(FeatureKind::DegreeOnehot), "Degree one-hot"),
    (
        "laplacian_eigenvectors",
        FeatureChoice::Baseline(FeatureKind::LaplacianEigenvectors),
        "Eigenvectors",
    ),
    ("random_walk", FeatureChoice::Baseline(FeatureKind::RandomWalk), "Random walk"),
    ("tpf", FeatureChoice::Baseline(FeatureKind::Tpf), "TPF"),
    ("svd_aligned", FeatureChoice::Baseline(FeatureKind::SvdAligned), "SVD aligned"),
];

impl FeatureChoice {
    pub fn key(self) -> &'static str {
        CHOICES.iter().find(|c| c.1 == self).unwrap().0
    }

    /// Row label in reports.
    pub fn display_name(self) -> &'static str {
        CHOICES.iter().find(|c| c.1 == self).unwrap().2
    }

    pub fn display_name_of(key: &str) -> &str {
        CHOICES.iter().find(|c| c.0 == key).map_or(key, |c| c.2)
    }
}

impl FromStr for FeatureChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CHOICES
            .iter()
            .find(|c| c.0 == s)
            .map(|c| c.1)
            .ok_or_else(|| Error::Config(format!("unknown feature '{s}'")))
    }
}

impl TryFrom<String> for FeatureChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureChoice> for String {
    fn from(c: FeatureChoice) -> String {
        c.key().to_string()
    }
}

impl fmt::Display for FeatureChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

fn default_seeds() -> Vec<u64> {
    (0..30).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_features() -> Vec<FeatureChoice> {
    vec![FeatureChoice::Tans]
}

fn default_feature_dim() -> usize {
    32
}

fn default_backbones() -> Vec<Backbone> {
    vec![Backbone::Gcn]
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub name: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Shared LLM response cache; defaults to `<output_dir>/cache`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_true")]
    pub parallel: bool,
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub prompt: PromptOptions,
    #[serde(default)]
    pub llm: LlmSettings,
    #[serde(default)]
    pub encoder: EncoderSettings,
    #[serde(default = "default_features")]
    pub features: Vec<FeatureChoice>,
    /// Width of the degree, eigenvector, random-walk and SVD baselines.
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_backbones")]
    pub backbones: Vec<Backbone>,
    /// Replaces the tuned presets for every run when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    /// Ordered (source, target) pairs for transfer protocols; all ordered
    /// pairs of datasets when empty.
    #[serde(default)]
    pub pairs: Vec<(String, String)>,
    /// Skip transfer cells whose feature widths differ instead of failing.
    #[serde(default)]
    pub skip_unaligned: bool,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        PipelineConfig::from_toml(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        match &self.cache_dir {
            Some(d) => self.resolve(d),
            None => self.resolve(&self.output_dir).join("cache"),
        }
    }

    pub fn dataset(&self, name: &str) -> Result<&DatasetConfig> {
        self.datasets
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::Config(format!("no dataset named '{name}'")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("run name '{}' must be non-empty without path separators", self.name));
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        if self.datasets.is_empty() {
            return bad("no datasets configured".into());
        }
        if self.features.is_empty() || self.backbones.is_empty() {
            return bad("features and backbones must be non-empty".into());
        }
        for (i, d) in self.datasets.iter().enumerate() {
            if d.name.is_empty() || !d.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return bad(format!("dataset name '{}' must be alphanumeric", d.name));
            }
            if self.datasets[..i].iter().any(|o| o.name == d.name) {
                return bad(format!("dataset '{}' listed twice", d.name));
            }
            for p in d.paths() {
                let full = self.resolve(p);
                if !full.is_file() {
                    return bad(format!("dataset '{}': {} does not exist", d.name, full.display()));
                }
            }
        }
        for (s, t) in &self.pairs {
            self.dataset(s)?;
            self.dataset(t)?;
            if s == t {
                return bad(format!("transfer pair ({s}, {t}) has identical ends"));
            }
        }
        if self.protocol != Protocol::Single && self.datasets.len() < 2 && self.pairs.is_empty() {
            return bad(format!("protocol {} needs at least two datasets", self.protocol.as_str()));
        }
        self.prompt.validate()?;
        if let Some(t) = &self.train {
            t.validate()?;
        }
        Ok(())
    }

    /// Ordered transfer pairs.
    pub fn transfer_pairs(&self) -> Vec<(String, String)> {
        if !self.pairs.is_empty() {
            return self.pairs.clone();
        }
        let mut out = Vec::new();
        for s in &self.datasets {
            for t in &self.datasets {
                if s.name != t.name {
                    out.push((s.name.clone(), t.name.clone()));
                }
            }
        }
        out
    }

    /// The config with every field that cannot change results cleared:
    /// where outputs go, thread usage and request concurrency.
    pub fn normalized(&self) -> PipelineConfig {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.cache_dir = None;
        c.parallel = true;
        c.llm.concurrency = 0;
        c.encoder.remote.concurrency = 0;
        c.base_dir = PathBuf::new();
        c
    }

    /// Hex SHA-256 over the normalized config and the bytes of every input
    /// file.
    pub fn content_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.normalized())?);
        for d in &self.datasets {
            for p in d.paths() {
                let full = self.resolve(p);
                let bytes = std::fs::read(&full).map_err(|e| Error::io(&full, e))?;
                h.update((bytes.len() as u64).to_le_bytes());
                h.update(&bytes);
            }
        }
        Ok(hex::encode(h.finalize()))
    }
}

/// Parses `0,1,5`, `0..30` (end exclusive) or a mix such as `0..3,10`.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad seed list '{s}'"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a >= b {
                    return Err(bad());
                }
                out.extend(a..b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}
