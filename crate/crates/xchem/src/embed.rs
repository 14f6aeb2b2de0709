//! Frozen text-encoder backends and the on-disk embedding cache.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xchem_core::embedding::{DescriptorEmbedding, EMBED_DIM};
use xchem_core::{DescriptorKind, Entry};

use crate::config::{BackendKind, Workspace};
use crate::fsutil::write_atomic;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding backend unavailable: {0}")]
    Transport(String),
    #[error("embedding backend misconfigured: {0}")]
    Config(String),
    #[error("embedding backend returned {got} dimensions, expected {expected}")]
    Dimension { got: usize, expected: usize },
}

impl EmbedError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, EmbedError::Transport(_))
    }
}

pub trait Embedder: Send + Sync {
    /// Stable identity; part of every cache key.
    fn id(&self) -> String;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn seed_of(label: &[u8]) -> u64 {
    let d = Sha256::digest(label);
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Deterministic offline encoder: hashed bag of words plus smooth random
/// Fourier features of every number in the text, scaled to unit length.
#[derive(Clone, Debug)]
pub struct StubEmbedder {
    dim: usize,
    freqs: Vec<f64>,
    phases: Vec<f64>,
}

impl Default for StubEmbedder {
    fn default() -> Self {
        Self::with_dim(EMBED_DIM)
    }
}

impl StubEmbedder {
    pub fn with_dim(dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_of(b"numeric-features"));
        let freqs = (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect();
        let phases = (0..dim).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        Self { dim, freqs, phases }
    }

    pub fn vector(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f64; self.dim];
        let tokens = text
            .split(|c: char| c.is_whitespace() || matches!(c, ':' | ',' | ';' | '(' | ')'))
            .filter(|t| !t.is_empty());
        for tok in tokens {
            if let Ok(x) = tok.parse::<f64>() {
                let u = x.signum() * x.abs().ln_1p();
                for k in 0..self.dim {
                    v[k] += 2.0 * (self.freqs[k] * u + self.phases[k]).cos();
                }
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed_of(tok.to_lowercase().as_bytes()));
                for x in v.iter_mut() {
                    *x += rng.random_range(-1.0..1.0);
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        v.iter().map(|x| (x * scale) as f32).collect()
    }
}

impl Embedder for StubEmbedder {
    fn id(&self) -> String {
        format!("stub-v1-{}", self.dim)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// JSON-over-HTTP encoder: `{model, input}` → `{vectors}`.
pub struct HttpEmbedder {
    url: String,
    model: String,
    retries: u32,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, model: impl Into<String>, timeout: Duration, retries: u32) -> Result<Self> {
        let client = reqwest::blocking::Client::builder().timeout(timeout).build()?;
        Ok(Self { url: url.into(), model: model.into(), retries, client })
    }

    fn attempt(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let resp = self
            .client
            .post(&self.url)
            .json(&EmbedRequest { model: &self.model, input: texts })
            .send()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(EmbedError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(EmbedError::Config(format!("HTTP {status} from {}", self.url)));
        }
        let body: EmbedResponse = resp.json().map_err(|e| EmbedError::Config(format!("malformed response: {e}")))?;
        if body.vectors.len() != texts.len() {
            return Err(EmbedError::Config(format!("{} vectors for {} inputs", body.vectors.len(), texts.len())));
        }
        Ok(body.vectors)
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> String {
        format!("http:{}#{}", self.url, self.model)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut delay = Duration::from_millis(200);
        let mut last = None;
        for attempt in 0..=self.retries {
            match self.attempt(texts) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retriable() && attempt < self.retries => {
                    log::warn!("embedding request failed ({e}); retrying");
                    std::thread::sleep(delay);
                    delay *= 2;
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| EmbedError::Transport("no attempt made".into())))
    }
}

/// Content-addressed store of little-endian `f32` vectors.
#[derive(Clone, Debug)]
pub struct EmbeddingCache {
    dir: PathBuf,
}

impl EmbeddingCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key(backend_id: &str, text: &str) -> String {
        let mut bytes = backend_id.as_bytes().to_vec();
        bytes.push(0);
        bytes.extend_from_slice(text.as_bytes());
        sha256_hex(&bytes)
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.f32"))
    }

    pub fn get(&self, backend_id: &str, text: &str) -> Result<Option<Vec<f32>>> {
        let p = self.path(&Self::key(backend_id, text));
        let bytes = match fs::read(&p) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e).with_context(|| format!("reading {}", p.display())),
        };
        if bytes.len() != EMBED_DIM * 4 {
            log::warn!("ignoring truncated cache entry {}", p.display());
            return Ok(None);
        }
        Ok(Some(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()))
    }

    pub fn put(&self, backend_id: &str, text: &str, vector: &[f32]) -> Result<()> {
        let bytes: Vec<u8> = vector.iter().flat_map(|x| x.to_le_bytes()).collect();
        write_atomic(&self.path(&Self::key(backend_id, text)), &bytes)
    }
}

/// Embedder plus cache. Backend calls may run in parallel; cache writes
/// happen on the calling thread only.
pub struct EmbeddingService {
    pub backend: Box<dyn Embedder>,
    pub cache: EmbeddingCache,
    pub batch_size: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EnsureStats {
    pub cached: usize,
    pub computed: usize,
}

impl EmbeddingService {
    pub fn new(backend: Box<dyn Embedder>, cache_dir: &Path) -> Self {
        Self { backend, cache: EmbeddingCache::new(cache_dir), batch_size: 64 }
    }

    fn check(&self, v: &[f32]) -> Result<(), EmbedError> {
        if v.len() != EMBED_DIM {
            return Err(EmbedError::Dimension { got: v.len(), expected: EMBED_DIM });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::Config("non-finite embedding values".into()));
        }
        Ok(())
    }

    pub fn embed_text(&self, text: &str) -> Result<Vec<f32>> {
        let id = self.backend.id();
        if let Some(v) = self.cache.get(&id, text)? {
            return Ok(v);
        }
        let v = self.backend.embed(&[text.to_string()])?.pop().unwrap_or_default();
        self.check(&v)?;
        self.cache.put(&id, text, &v)?;
        Ok(v)
    }

    /// Makes sure every text has a cached vector.
    pub fn ensure(&self, texts: &BTreeSet<String>) -> Result<EnsureStats> {
        let id = self.backend.id();
        let mut missing = Vec::new();
        for t in texts {
            if self.cache.get(&id, t)?.is_none() {
                missing.push(t.clone());
            }
        }
        let stats = EnsureStats { cached: texts.len() - missing.len(), computed: missing.len() };
        let batches: Vec<&[String]> = missing.chunks(self.batch_size.max(1)).collect();
        let results: Vec<Result<Vec<Vec<f32>>, EmbedError>> =
            batches.par_iter().map(|b| self.backend.embed(b)).collect();
        for (batch, res) in batches.iter().zip(results) {
            let vectors = res?;
            for (t, v) in batch.iter().zip(&vectors) {
                self.check(v)?;
                self.cache.put(&id, t, v)?;
            }
        }
        Ok(stats)
    }

    /// Cached vectors for all nine descriptors of a molecule.
    pub fn bank(&self, entry: &Entry) -> Result<BTreeMap<DescriptorKind, DescriptorEmbedding>> {
        let id = self.backend.id();
        let mut bank = BTreeMap::new();
        for kind in DescriptorKind::ALL {
            let Some(rec) = entry.descriptor(kind) else { continue };
            let text = rec.embedding_text();
            let vector = self
                .cache
                .get(&id, &text)?
                .with_context(|| format!("no cached embedding for {} of {} (run `xchem embed`)", kind, entry.id()))?;
            bank.insert(kind, DescriptorEmbedding { descriptor: kind, text_hash: sha256_hex(text.as_bytes()), vector });
        }
        Ok(bank)
    }
}

/// Embedding backend and cache configured by the workspace.
pub fn service_for(ws: &Workspace) -> Result<EmbeddingService> {
    let b = &ws.config.backends;
    let backend: Box<dyn Embedder> = match b.embedding {
        BackendKind::Stub => Box::new(StubEmbedder::default()),
        BackendKind::Http => {
            let url = b.embedding_url.clone().context("embedding backend is http but no embedding_url is set")?;
            Box::new(HttpEmbedder::new(url, b.embedding_model.clone(), Duration::from_secs(b.timeout_secs), b.retries)?)
        }
    };
    Ok(EmbeddingService::new(backend, &ws.embeddings()))
}

pub fn descriptor_texts(entries: &[Entry]) -> BTreeSet<String> {
    entries
        .iter()
        .flat_map(|e| DescriptorKind::ALL.into_iter().filter_map(move |k| e.descriptor(k).map(|r| r.embedding_text())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_is_deterministic_and_distinguishes_texts() {
        let s = StubEmbedder::default();
        let a = s.vector("Molecular Weight: 46.07 g/mol");
        assert_eq!(a.len(), EMBED_DIM);
        assert_eq!(a, s.vector("Molecular Weight: 46.07 g/mol"));
        let b = s.vector("Molecular Weight: 58.08 g/mol");
        assert_ne!(a, b);
        let norm: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
    }

    #[test]
    fn cache_hit_is_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let svc = EmbeddingService::new(Box::new(StubEmbedder::default()), dir.path());
        let a = svc.embed_text("XLogP: -0.3").unwrap();
        let b = svc.embed_text("XLogP: -0.3").unwrap();
        assert_eq!(a, b);
        assert_eq!(svc.cache.get(&svc.backend.id(), "XLogP: -0.3").unwrap(), Some(a));
    }

    struct Short;
    impl Embedder for Short {
        fn id(&self) -> String {
            "short".into()
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
            Ok(texts.iter().map(|_| vec![0.0; 512]).collect())
        }
    }

    #[test]
    fn wrong_dimension_is_a_configuration_error() {
        let dir = tempfile::tempdir().unwrap();
        let svc = EmbeddingService::new(Box::new(Short), dir.path());
        let err = svc.embed_text("PSA: 20.2").unwrap_err();
        assert!(matches!(err.downcast_ref::<EmbedError>(), Some(EmbedError::Dimension { got: 512, expected: 768 })));
    }
}
