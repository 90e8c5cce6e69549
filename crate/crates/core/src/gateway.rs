//! Image search gateway: resolves [`QuerySpec`]s to ranked image records
//! through a pluggable backend, with a content-addressed on-disk cache.
//!
//! Fixtures and cache entries share one layout: `<dir>/<sha1(key)>.json`
//! holding an ordered JSON array of `{image_id, source_url}`.

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind as IoErrorKind;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::error::{Error, ErrorKind, Result};
use crate::expansion::{canonical_key, Polarity, QuerySpec};
use crate::series::TimeInterval;

/// One raw hit as stored in fixture and cache files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub image_id: String,
    pub source_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub source_url: String,
    /// 1-based position in the response.
    pub rank: u32,
    pub query_key: String,
    pub polarity: Polarity,
    pub interval: TimeInterval,
    pub step_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Fixture,
    Live,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub m_per_query: usize,
    pub backend: BackendKind,
    pub cache_dir: Option<PathBuf>,
    pub fixture_dir: PathBuf,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            m_per_query: 25,
            backend: BackendKind::Fixture,
            cache_dir: None,
            fixture_dir: PathBuf::from("fixtures"),
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_per_query == 0 {
            return Err(Error::invalid("m_per_query must be at least 1"));
        }
        Ok(())
    }
}

/// Anything that can answer an image query with an ordered hit list.
pub trait SearchBackend: Sync {
    fn search(&self, query: &QuerySpec, max_hits: usize) -> Result<Vec<Hit>>;
}

impl<B: SearchBackend + ?Sized> SearchBackend for &B {
    fn search(&self, query: &QuerySpec, max_hits: usize) -> Result<Vec<Hit>> {
        (**self).search(query, max_hits)
    }
}

impl<B: SearchBackend + ?Sized + Send> SearchBackend for Box<B> {
    fn search(&self, query: &QuerySpec, max_hits: usize) -> Result<Vec<Hit>> {
        (**self).search(query, max_hits)
    }
}

pub fn key_digest(key: &str) -> String {
    let digest = Sha1::digest(key.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn entry_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{}.json", key_digest(key)))
}

fn read_hits(path: &Path) -> Result<Vec<Hit>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn encode_hits(hits: &[Hit]) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(hits).expect("hits serialize");
    bytes.push(b'\n');
    bytes
}

/// Writes a fixture file for `spec` under `dir`.
pub fn write_fixture(dir: &Path, spec: &QuerySpec, hits: &[Hit]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = entry_path(dir, &canonical_key(spec));
    fs::write(&path, encode_hits(hits)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads `<fixture_dir>/<sha1(key)>.json`.
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    dir: PathBuf,
}

impl FixtureBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureBackend { dir: dir.into() }
    }
}

impl SearchBackend for FixtureBackend {
    fn search(&self, query: &QuerySpec, _max_hits: usize) -> Result<Vec<Hit>> {
        let key = canonical_key(query);
        let path = entry_path(&self.dir, &key);
        if !path.exists() {
            return Err(Error::MissingFixture { key, path });
        }
        read_hits(&path)
    }
}

/// Adapter for an image-search HTTP API that takes a text query plus an
/// upload date range and answers `{"images": [{"id": .., "url": ..}, ..]}`.
///
/// Endpoint and key come from `POP_SEARCH_ENDPOINT` / `POP_SEARCH_API_KEY`.
#[cfg(feature = "live")]
pub mod live {
    use std::time::Duration;

    use serde::Deserialize;

    use super::{key_digest, Hit, SearchBackend};
    use crate::error::{Error, Result};
    use crate::expansion::QuerySpec;

    pub const ENDPOINT_VAR: &str = "POP_SEARCH_ENDPOINT";
    pub const API_KEY_VAR: &str = "POP_SEARCH_API_KEY";

    #[derive(Debug, Clone)]
    pub struct LiveBackend {
        endpoint: String,
        api_key: Option<String>,
        max_attempts: u32,
        agent: ureq::Agent,
    }

    #[derive(Deserialize)]
    struct Response {
        images: Vec<Image>,
    }

    #[derive(Deserialize)]
    struct Image {
        id: Option<String>,
        url: String,
    }

    impl LiveBackend {
        pub fn from_env() -> Result<Self> {
            let endpoint =
                std::env::var(ENDPOINT_VAR).map_err(|_| Error::invalid(format!("{ENDPOINT_VAR} is not set")))?;
            Ok(Self::new(endpoint, std::env::var(API_KEY_VAR).ok()))
        }

        pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
            LiveBackend {
                endpoint: endpoint.into(),
                api_key,
                max_attempts: 3,
                agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(30)).build(),
            }
        }

        fn request(&self, query: &QuerySpec, max_hits: usize) -> std::result::Result<Vec<Hit>, String> {
            let mut req = self
                .agent
                .get(&self.endpoint)
                .query("q", &query.query_text())
                .query("from", &query.interval.start().monday().to_string())
                .query("to", &query.interval.end().monday().to_string())
                .query("num", &max_hits.to_string());
            if let Some(key) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            let text = req
                .call()
                .map_err(|e| e.to_string())?
                .into_string()
                .map_err(|e| e.to_string())?;
            let body: Response = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            Ok(body
                .images
                .into_iter()
                .map(|img| Hit {
                    image_id: img.id.unwrap_or_else(|| key_digest(&img.url)),
                    source_url: img.url,
                })
                .collect())
        }
    }

    impl SearchBackend for LiveBackend {
        fn search(&self, query: &QuerySpec, max_hits: usize) -> Result<Vec<Hit>> {
            let mut last = String::new();
            for attempt in 0..self.max_attempts {
                match self.request(query, max_hits) {
                    Ok(hits) => return Ok(hits),
                    Err(e) => last = e,
                }
                std::thread::sleep(Duration::from_millis(200 << attempt));
            }
            Err(Error::Retryable {
                attempts: self.max_attempts,
                message: last,
            })
        }
    }
}

/// Builds the backend named in `cfg`.
pub fn backend_for(cfg: &GatewayConfig) -> Result<Box<dyn SearchBackend + Send>> {
    match cfg.backend {
        BackendKind::Fixture => Ok(Box::new(FixtureBackend::new(&cfg.fixture_dir))),
        #[cfg(feature = "live")]
        BackendKind::Live => Ok(Box::new(live::LiveBackend::from_env()?)),
        #[cfg(not(feature = "live"))]
        BackendKind::Live => Err(Error::invalid(
            "live search backend requires building with the `live` feature",
        )),
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// On-disk response cache. The first completed write for a key wins; later
/// writers discard their copy and read the stored one.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ResponseCache { dir })
    }

    pub fn get(&self, key: &str) -> Result<Option<Vec<Hit>>> {
        let path = entry_path(&self.dir, key);
        if !path.exists() {
            return Ok(None);
        }
        read_hits(&path).map(Some)
    }

    /// Stores `hits` unless an entry exists; returns whatever is stored.
    pub fn put_first(&self, key: &str, hits: &[Hit]) -> Result<Vec<Hit>> {
        let path = entry_path(&self.dir, key);
        let tmp = self.dir.join(format!(
            ".{}.{}.{}.tmp",
            key_digest(key),
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, encode_hits(hits)).map_err(|e| Error::io(&tmp, e))?;
        let linked = fs::hard_link(&tmp, &path);
        let _ = fs::remove_file(&tmp);
        match linked {
            Ok(()) => Ok(hits.to_vec()),
            Err(e) if e.kind() == IoErrorKind::AlreadyExists => read_hits(&path),
            Err(_) => {
                // Filesystems without hard links: exclusive create instead.
                match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                    Ok(mut f) => {
                        use std::io::Write;
                        f.write_all(&encode_hits(hits)).map_err(|e| Error::io(&path, e))?;
                        Ok(hits.to_vec())
                    }
                    Err(e) if e.kind() == IoErrorKind::AlreadyExists => read_hits(&path),
                    Err(e) => Err(Error::io(&path, e)),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchFailure {
    pub query_key: String,
    pub missing_data: bool,
    pub message: String,
}

/// Outcome of a batch fetch: everything that resolved plus every failure.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchReport {
    pub results: BTreeMap<String, Vec<ImageRecord>>,
    pub failures: Vec<FetchFailure>,
}

impl FetchReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn record_count(&self) -> usize {
        self.results.values().map(Vec::len).sum()
    }

    pub fn records(&self) -> impl Iterator<Item = &ImageRecord> {
        self.results.values().flatten()
    }
}

pub struct Gateway<B> {
    backend: B,
    m_per_query: usize,
    cache: Option<ResponseCache>,
}

impl Gateway<Box<dyn SearchBackend + Send>> {
    pub fn from_config(cfg: &GatewayConfig) -> Result<Self> {
        cfg.validate()?;
        let cache = cfg.cache_dir.as_ref().map(ResponseCache::new).transpose()?;
        Ok(Gateway {
            backend: backend_for(cfg)?,
            m_per_query: cfg.m_per_query,
            cache,
        })
    }
}

impl<B: SearchBackend> Gateway<B> {
    pub fn new(backend: B, m_per_query: usize, cache: Option<ResponseCache>) -> Result<Self> {
        if m_per_query == 0 {
            return Err(Error::invalid("m_per_query must be at least 1"));
        }
        Ok(Gateway {
            backend,
            m_per_query,
            cache,
        })
    }

    /// Top `m_per_query` hits for `q`, served from cache when present.
    pub fn fetch(&self, q: &QuerySpec) -> Result<Vec<ImageRecord>> {
        let key = canonical_key(q);
        let hits = match self.cache.as_ref().map(|c| c.get(&key)).transpose()?.flatten() {
            Some(hits) => hits,
            None => {
                let mut hits = self.backend.search(q, self.m_per_query)?;
                hits.truncate(self.m_per_query);
                match &self.cache {
                    Some(cache) => cache.put_first(&key, &hits)?,
                    None => hits,
                }
            }
        };
        Ok(hits
            .into_iter()
            .enumerate()
            .map(|(i, hit)| ImageRecord {
                image_id: hit.image_id,
                source_url: hit.source_url,
                rank: i as u32 + 1,
                query_key: key.clone(),
                polarity: q.polarity,
                interval: q.interval,
                step_k: q.step_k,
            })
            .collect())
    }

    /// Fetches every spec; failures are collected rather than aborting.
    pub fn fetch_all(&self, specs: &[QuerySpec]) -> Result<FetchReport> {
        if specs.is_empty() {
            return Err(Error::invalid("no queries to fetch"));
        }
        let outcomes: Vec<(String, Result<Vec<ImageRecord>>)> =
            specs.par_iter().map(|q| (canonical_key(q), self.fetch(q))).collect();
        let mut report = FetchReport::default();
        for (key, outcome) in outcomes {
            match outcome {
                Ok(records) => {
                    report.results.insert(key, records);
                }
                Err(e) => report.failures.push(FetchFailure {
                    query_key: key,
                    missing_data: e.kind() == ErrorKind::MissingData,
                    message: e.to_string(),
                }),
            }
        }
        Ok(report)
    }
}

pub fn fetch(q: &QuerySpec, cfg: &GatewayConfig) -> Result<Vec<ImageRecord>> {
    Gateway::from_config(cfg)?.fetch(q)
}

pub fn fetch_all(specs: &[QuerySpec], cfg: &GatewayConfig) -> Result<FetchReport> {
    Gateway::from_config(cfg)?.fetch_all(specs)
}
