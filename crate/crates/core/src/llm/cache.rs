use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LlmRequest, LlmResponse, ResponseSource};
use crate::error::{Error, Result};

/// One JSON file per request under `dir`, named by the hex SHA-256 of the
/// request's model, prompt, temperature and token limit.
#[derive(Clone, Debug)]
pub struct ResponseCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    request: LlmRequest,
    response: LlmResponse,
    timestamp: u64,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(req: &LlmRequest) -> String {
        let canonical = serde_json::json!({
            "model": req.model,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }

    fn path(&self, req: &LlmRequest) -> PathBuf {
        self.dir.join(format!("{}.json", Self::key(req)))
    }

    /// A missing, unreadable or mismatched entry is a miss.
    pub fn get(&self, req: &LlmRequest) -> Option<LlmResponse> {
        let path = self.path(req);
        let raw = fs::read_to_string(&path).ok()?;
        match serde_json::from_str::<Entry>(&raw) {
            Ok(entry) if entry.request == *req => Some(LlmResponse {
                backend: ResponseSource::Cache,
                ..entry.response
            }),
            Ok(_) => {
                log::warn!("{}: cached request differs from lookup, ignoring", path.display());
                None
            }
            Err(e) => {
                log::warn!("{}: corrupt cache entry ({e}), treating as miss", path.display());
                None
            }
        }
    }

    /// Writes through a temporary file and renames it into place, so readers
    /// never observe a partial entry.
    pub fn put(&self, req: &LlmRequest, response: &LlmResponse) -> Result<()> {
        let entry = Entry {
            request: req.clone(),
            response: response.clone(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        let path = self.path(req);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_vec_pretty(&entry)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|it| {
                it.filter_map(|e| e.ok())
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
