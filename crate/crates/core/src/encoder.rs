//! Node texts to fixed-width feature rows.
//!
//! [`encode_remote`] calls an OpenAI-compatible embeddings service;
//! [`encode_hashed`] is a signed feature-hashing bag of words that needs no
//! network. Both produce L2-normalized rows, so two graphs encoded by the
//! same backend always share one feature space.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::http::{self, RateLimiter};
use crate::llm::RemoteConfig;
use crate::par::{self, Execution};

/// Output width of MiniLM-class sentence encoders.
pub const DEFAULT_DIM: usize = 384;

const MAGIC: &[u8; 8] = b"TANSEMB1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Remote,
    Hashed,
    Baseline,
}

/// Row-major `rows × dim` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
    pub source: FeatureSource,
    pub model_id: String,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    model_id: String,
    source: FeatureSource,
    rows: usize,
    dim: usize,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, dim: usize, source: FeatureSource, model_id: impl Into<String>) -> Self {
        EmbeddingMatrix {
            rows,
            dim,
            data: vec![0.0; rows * dim],
            source,
            model_id: model_id.into(),
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, dim: usize, source: FeatureSource, model_id: impl Into<String>) -> Result<Self> {
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(format!("row {bad} has {} values, expected {dim}", rows[bad].len())));
        }
        Ok(EmbeddingMatrix {
            rows: rows.len(),
            dim,
            data: rows.concat(),
            source,
            model_id: model_id.into(),
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Scales every nonzero row to unit L2 norm.
    pub fn normalize_rows(&mut self) {
        for i in 0..self.rows {
            let row = self.row_mut(i);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Little-endian `magic, rows: u64, dim: u64` header, then row-major f32
    /// values; metadata goes to `<path>.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + self.data.len() * 4);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.rows as u64).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for &x in &self.data {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))?;
        let sidecar = Sidecar {
            model_id: self.model_id.clone(),
            source: self.source,
            rows: self.rows,
            dim: self.dim,
        };
        let sc = Self::sidecar_path(path);
        fs::write(&sc, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&sc, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |message: String| Error::MatrixFormat {
            path: path.to_path_buf(),
            message,
        };
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 24 || &bytes[..8] != MAGIC {
            return Err(bad("missing header".into()));
        }
        let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let dim = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let expected = rows.checked_mul(dim).and_then(|n| n.checked_mul(4)).map(|n| n + 24);
        if expected != Some(bytes.len()) {
            return Err(bad(format!("{} bytes for a {rows}x{dim} matrix", bytes.len())));
        }
        let data = bytes[24..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let sc = Self::sidecar_path(path);
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(&sc).map_err(|e| Error::io(&sc, e))?)?;
        if (sidecar.rows, sidecar.dim) != (rows, dim) {
            return Err(bad("sidecar shape disagrees with header".into()));
        }
        Ok(EmbeddingMatrix {
            rows,
            dim,
            data,
            source: sidecar.source,
            model_id: sidecar.model_id,
        })
    }
}

/// Lowercase alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Seeded 64-bit hash: FNV-1a over the bytes, then a splitmix64 finalizer.
fn token_hash(token: &str, seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in token.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

pub fn encode_hashed(texts: &[String], dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    encode_hashed_with(texts, dim, seed, Execution::default())
}

/// Each token adds ±1 at a hashed coordinate; rows are then L2-normalized.
/// Texts without tokens give zero rows.
pub fn encode_hashed_with(texts: &[String], dim: usize, seed: u64, exec: Execution) -> Result<EmbeddingMatrix> {
    if dim < 8 {
        return Err(Error::InvalidArgument(format!("hashed dim must be at least 8, got {dim}")));
    }
    let rows = par::map_range(texts.len(), exec, |i| {
        let mut row = vec![0.0f64; dim];
        for token in tokenize(&texts[i]) {
            let h = token_hash(&token, seed);
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            row[(h % dim as u64) as usize] += sign;
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
        row
    });
    let empty = rows.iter().filter(|r| r.iter().all(|&x| x == 0.0)).count();
    if empty > 0 {
        log::warn!("{empty} text(s) produced zero rows");
    }
    EmbeddingMatrix::from_rows(rows, dim, FeatureSource::Hashed, format!("hashed-{dim}-seed{seed}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub remote: RemoteConfig,
    pub model: String,
    pub batch_size: usize,
    /// Maximum requests in flight.
    pub concurrency: usize,
    pub normalize: bool,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            remote: RemoteConfig {
                api_key_env: "TANS_EMBED_API_KEY".into(),
                ..Default::default()
            },
            model: "sentence-transformers/all-MiniLM-L6-v2".into(),
            batch_size: 64,
            concurrency: 4,
            normalize: true,
        }
    }
}

fn parse_embeddings(body: &serde_json::Value, expected: usize) -> Result<Vec<Vec<f64>>> {
    let data = body["data"]
        .as_array()
        .ok_or_else(|| Error::MalformedResponse("missing data array".into()))?;
    if data.len() != expected {
        return Err(Error::MalformedResponse(format!("{} embeddings for {expected} inputs", data.len())));
    }
    let mut out: Vec<Option<Vec<f64>>> = vec![None; expected];
    for (pos, item) in data.iter().enumerate() {
        let idx = item["index"].as_u64().map(|i| i as usize).unwrap_or(pos);
        let values = item["embedding"]
            .as_array()
            .ok_or_else(|| Error::MalformedResponse("missing embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| Error::MalformedResponse("non-numeric embedding".into())))
            .collect::<Result<Vec<f64>>>()?;
        let slot = out
            .get_mut(idx)
            .ok_or_else(|| Error::MalformedResponse(format!("embedding index {idx} out of range")))?;
        *slot = Some(values);
    }
    out.into_iter()
        .map(|r| r.ok_or_else(|| Error::MalformedResponse("missing embedding index".into())))
        .collect()
}

/// Embeds `texts` in batches of `cfg.batch_size`; row i embeds texts[i].
pub fn encode_remote(texts: &[String], cfg: &EmbeddingConfig) -> Result<EmbeddingMatrix> {
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let batches: Vec<&[String]> = texts.chunks(cfg.batch_size).collect();
    let url = cfg.remote.url("/v1/embeddings");
    let key = cfg.remote.resolve_key();
    let limiter = RateLimiter::new(cfg.remote.requests_per_minute);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<Vec<Vec<f64>>>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..cfg.concurrency.clamp(1, batches.len().max(1)) {
            scope.spawn(|| loop {
                let b = next.fetch_add(1, Ordering::Relaxed);
                let Some(batch) = batches.get(b) else { break };
                let body = json!({ "model": cfg.model, "input": batch });
                let outcome = http::post_json(&url, key.as_deref(), &body, &cfg.remote.retry, Some(&limiter))
                    .and_then(|r| parse_embeddings(&r.body, batch.len()));
                results.lock().unwrap().push((b, outcome));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(b, _)| *b);
    let mut rows = Vec::with_capacity(texts.len());
    for (_, r) in results {
        rows.extend(r?);
    }
    let dim = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "embedding {bad} has {} dims, earlier ones have {dim}",
            rows[bad].len()
        )));
    }
    let mut m = EmbeddingMatrix::from_rows(rows, dim, FeatureSource::Remote, cfg.model.clone())?;
    if !m.is_finite() {
        return Err(Error::MalformedResponse("non-finite embedding values".into()));
    }
    if cfg.normalize {
        m.normalize_rows();
    }
    Ok(m)
}
