//! Polite page fetching with a content-addressed snapshot cache.
//!
//! Cache layout under the cache directory:
//!
//! ```text
//! index.json          url -> { hash, fetched_at, status }
//! blobs/<sha256-hex>  raw bytes exactly as received
//! ```
//!
//! Both files are replaced atomically. Raw bytes are never re-encoded because
//! evidence offsets point into them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use url::Url;

use crate::error::{Error, Result};
use crate::util::{content_hash, write_atomic};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSnapshot {
    pub url: String,
    pub fetched_at: DateTime<Utc>,
    pub http_status: u16,
    #[serde(skip)]
    pub raw_html: Vec<u8>,
    pub content_hash: String,
}

impl PageSnapshot {
    pub fn new(url: impl Into<String>, http_status: u16, raw_html: Vec<u8>) -> Result<Self> {
        Self::at(url, http_status, raw_html, Utc::now())
    }

    pub fn at(
        url: impl Into<String>,
        http_status: u16,
        raw_html: Vec<u8>,
        fetched_at: DateTime<Utc>,
    ) -> Result<Self> {
        if !(100..=599).contains(&http_status) {
            return Err(Error::Protocol(format!("HTTP status {http_status} out of range")));
        }
        Ok(Self {
            url: url.into(),
            fetched_at,
            http_status,
            content_hash: content_hash(&raw_html),
            raw_html,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrawlPolicy {
    #[serde(rename = "delay_ms", with = "millis")]
    pub per_domain_delay: Duration,
    #[serde(rename = "retries")]
    pub max_retries: u32,
    #[serde(rename = "timeout_ms", with = "millis")]
    pub timeout: Duration,
    pub user_agent: String,
    pub blocked_domains: BTreeSet<String>,
    pub respect_robots: bool,
    /// Domains for which robots.txt is not consulted.
    pub robots_overrides: BTreeSet<String>,
    /// How long a cached snapshot is served without refetching; `None` = forever.
    #[serde(rename = "cache_ttl_ms", with = "opt_millis")]
    pub cache_ttl: Option<Duration>,
}

impl Default for CrawlPolicy {
    fn default() -> Self {
        Self {
            per_domain_delay: Duration::from_secs(1),
            max_retries: 3,
            timeout: Duration::from_secs(30),
            user_agent: concat!("webextractor/", env!("CARGO_PKG_VERSION")).into(),
            blocked_domains: BTreeSet::new(),
            respect_robots: true,
            robots_overrides: BTreeSet::new(),
            cache_ttl: None,
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

mod opt_millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_some(&(d.as_millis() as u64)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Ok(Option::<u64>::deserialize(d)?.map(Duration::from_millis))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct IndexEntry {
    hash: String,
    fetched_at: DateTime<Utc>,
    status: u16,
}

/// Content-addressed on-disk snapshot store.
#[derive(Debug)]
pub struct SnapshotCache {
    dir: PathBuf,
    index: Mutex<BTreeMap<String, IndexEntry>>,
}

impl SnapshotCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(dir.join("blobs")).map_err(|e| Error::io(&dir, e))?;
        let index_path = dir.join("index.json");
        let index = if index_path.exists() {
            let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Integrity(format!("cache index unreadable: {e}")))?
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            dir,
            index: Mutex::new(index),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn blob_path(&self, hash: &str) -> PathBuf {
        self.dir.join("blobs").join(hash)
    }

    pub fn store(&self, snap: &PageSnapshot) -> Result<()> {
        if content_hash(&snap.raw_html) != snap.content_hash {
            return Err(Error::Integrity(format!("snapshot of {} has a stale hash", snap.url)));
        }
        let blob = self.blob_path(&snap.content_hash);
        if !blob.exists() {
            write_atomic(&blob, &snap.raw_html)?;
        }
        let mut index = self.index.lock().unwrap();
        index.insert(
            snap.url.clone(),
            IndexEntry {
                hash: snap.content_hash.clone(),
                fetched_at: snap.fetched_at,
                status: snap.http_status,
            },
        );
        let bytes = serde_json::to_vec_pretty(&*index)?;
        write_atomic(&self.dir.join("index.json"), &bytes)
    }

    /// Latest snapshot for `url`, verified against its recorded hash.
    pub fn lookup(&self, url: &str) -> Result<Option<PageSnapshot>> {
        let Some(entry) = self.index.lock().unwrap().get(url).cloned() else {
            return Ok(None);
        };
        let path = self.blob_path(&entry.hash);
        let raw = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if content_hash(&raw) != entry.hash {
            return Err(Error::Integrity(format!(
                "cached bytes for {url} do not match hash {}",
                entry.hash
            )));
        }
        Ok(Some(PageSnapshot {
            url: url.to_string(),
            fetched_at: entry.fetched_at,
            http_status: entry.status,
            raw_html: raw,
            content_hash: entry.hash,
        }))
    }

    pub fn urls(&self) -> Vec<String> {
        self.index.lock().unwrap().keys().cloned().collect()
    }
}

pub fn cache_lookup(cache: &SnapshotCache, url: &str) -> Result<Option<PageSnapshot>> {
    cache.lookup(url)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// Retrieval backend. A static HTTP client is the default; a browser-rendering
/// backend can be plugged in behind the same signature.
pub trait Fetcher: Send + Sync {
    /// `Err(Error::Transport)` means "retryable"; any HTTP answer is `Ok`.
    fn fetch(&self, url: &str, policy: &CrawlPolicy) -> Result<FetchResponse>;
}

/// Serves pages from a directory: `pages.json` maps URLs to file names.
#[derive(Debug, Clone)]
pub struct FixtureFetcher {
    dir: PathBuf,
    pages: BTreeMap<String, String>,
}

impl FixtureFetcher {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let manifest = dir.join("pages.json");
        let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let pages = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", manifest.display())))?;
        Ok(Self { dir, pages })
    }
}

impl Fetcher for FixtureFetcher {
    fn fetch(&self, url: &str, _policy: &CrawlPolicy) -> Result<FetchResponse> {
        match self.pages.get(url) {
            Some(file) => {
                let path = self.dir.join(file);
                let body = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                Ok(FetchResponse { status: 200, body })
            }
            None => Ok(FetchResponse {
                status: 404,
                body: Vec::new(),
            }),
        }
    }
}

#[cfg(feature = "net")]
pub use http_fetcher::HttpFetcher;

#[cfg(feature = "net")]
mod http_fetcher {
    use super::*;

    /// Plain HTTP GET; no JavaScript rendering.
    #[derive(Debug, Default, Clone)]
    pub struct HttpFetcher;

    impl Fetcher for HttpFetcher {
        fn fetch(&self, url: &str, policy: &CrawlPolicy) -> Result<FetchResponse> {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(policy.timeout))
                .http_status_as_error(false)
                .user_agent(policy.user_agent.as_str())
                .build()
                .into();
            let mut resp = agent
                .get(url)
                .call()
                .map_err(|e| Error::Transport(format!("GET {url}: {e}")))?;
            let status = resp.status().as_u16();
            let body = resp
                .body_mut()
                .with_config()
                .limit(64 * 1024 * 1024)
                .read_to_vec()
                .map_err(|e| Error::Transport(format!("GET {url}: {e}")))?;
            Ok(FetchResponse { status, body })
        }
    }
}

/// Allow/disallow prefixes for our user agent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RobotsRules {
    rules: Vec<(bool, String)>,
}

impl RobotsRules {
    pub fn parse(text: &str, user_agent: &str) -> Self {
        let ua = user_agent.to_ascii_lowercase();
        let ua_token = ua.split('/').next().unwrap_or("").trim().to_string();
        // (agents of the group, rules of the group)
        let mut groups: Vec<(Vec<String>, Vec<(bool, String)>)> = Vec::new();
        let mut in_agents = false;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            let Some((key, value)) = line.split_once(':') else {
                continue;
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().to_string();
            match key.as_str() {
                "user-agent" => {
                    if !in_agents {
                        groups.push((Vec::new(), Vec::new()));
                    }
                    in_agents = true;
                    groups.last_mut().unwrap().0.push(value.to_ascii_lowercase());
                }
                "allow" | "disallow" => {
                    in_agents = false;
                    if let Some(g) = groups.last_mut() {
                        if !(key == "disallow" && value.is_empty()) {
                            g.1.push((key == "allow", value));
                        }
                    }
                }
                _ => {}
            }
        }
        let specific = groups
            .iter()
            .find(|(agents, _)| agents.iter().any(|a| a != "*" && !ua_token.is_empty() && ua_token.contains(a.as_str())));
        let chosen = specific.or_else(|| groups.iter().find(|(a, _)| a.iter().any(|a| a == "*")));
        Self {
            rules: chosen.map(|g| g.1.clone()).unwrap_or_default(),
        }
    }

    /// Longest matching prefix wins; allow wins ties.
    pub fn allows(&self, path: &str) -> bool {
        let mut best: Option<(usize, bool)> = None;
        for (allow, prefix) in &self.rules {
            if path.starts_with(prefix.as_str()) {
                let better = match best {
                    None => true,
                    Some((len, a)) => prefix.len() > len || (prefix.len() == len && *allow && !a),
                };
                if better {
                    best = Some((prefix.len(), *allow));
                }
            }
        }
        best.is_none_or(|(_, allow)| allow)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub url: String,
    pub reason: String,
}

/// Fetches pages through a [`Fetcher`], one request at a time per domain.
pub struct Crawler {
    fetcher: Box<dyn Fetcher>,
    cache: SnapshotCache,
    policy: CrawlPolicy,
    gates: Mutex<HashMap<String, Arc<Mutex<Option<Instant>>>>>,
    robots: Mutex<HashMap<String, RobotsRules>>,
    blocked_at_runtime: Mutex<BTreeSet<String>>,
    skipped: Mutex<Vec<SkipRecord>>,
}

impl Crawler {
    pub fn new(fetcher: impl Fetcher + 'static, cache: SnapshotCache, policy: CrawlPolicy) -> Self {
        Self {
            fetcher: Box::new(fetcher),
            cache,
            policy,
            gates: Mutex::new(HashMap::new()),
            robots: Mutex::new(HashMap::new()),
            blocked_at_runtime: Mutex::new(BTreeSet::new()),
            skipped: Mutex::new(Vec::new()),
        }
    }

    pub fn cache(&self) -> &SnapshotCache {
        &self.cache
    }

    pub fn policy(&self) -> &CrawlPolicy {
        &self.policy
    }

    pub fn skipped(&self) -> Vec<SkipRecord> {
        self.skipped.lock().unwrap().clone()
    }

    fn skip(&self, url: &str, reason: impl Into<String>) -> Error {
        let reason = reason.into();
        self.skipped.lock().unwrap().push(SkipRecord {
            url: url.to_string(),
            reason: reason.clone(),
        });
        Error::Skipped {
            url: url.to_string(),
            reason,
        }
    }

    // Blocks until this domain's delay since the previous request start has elapsed.
    fn wait_turn(&self, domain: &str) {
        let gate = self
            .gates
            .lock()
            .unwrap()
            .entry(domain.to_string())
            .or_default()
            .clone();
        let mut last = gate.lock().unwrap();
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.policy.per_domain_delay {
                std::thread::sleep(self.policy.per_domain_delay - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn fetch_with_retries(&self, url: &str, domain: &str) -> Result<FetchResponse> {
        let mut last_err = None;
        for _ in 0..=self.policy.max_retries {
            self.wait_turn(domain);
            match self.fetcher.fetch(url, &self.policy) {
                Ok(r) if r.status >= 500 => {
                    last_err = Some(Error::Transport(format!("{url}: HTTP {}", r.status)));
                }
                Ok(r) => return Ok(r),
                Err(e @ Error::Transport(_)) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.unwrap_or_else(|| Error::Transport(format!("{url}: no attempt made"))))
    }

    fn robots_allow(&self, url: &Url, domain: &str) -> Result<bool> {
        if !self.policy.respect_robots || self.policy.robots_overrides.contains(domain) {
            return Ok(true);
        }
        let cached = self.robots.lock().unwrap().get(domain).cloned();
        let rules = match cached {
            Some(r) => r,
            None => {
                let mut robots_url = url.clone();
                robots_url.set_path("/robots.txt");
                robots_url.set_query(None);
                robots_url.set_fragment(None);
                let rules = match self.fetch_with_retries(robots_url.as_str(), domain) {
                    Ok(r) if r.status == 200 => {
                        RobotsRules::parse(&String::from_utf8_lossy(&r.body), &self.policy.user_agent)
                    }
                    Ok(_) => RobotsRules::default(),
                    Err(Error::Transport(_)) => RobotsRules::default(),
                    Err(e) => return Err(e),
                };
                self.robots
                    .lock()
                    .unwrap()
                    .insert(domain.to_string(), rules.clone());
                rules
            }
        };
        let mut path = url.path().to_string();
        if let Some(q) = url.query() {
            path.push('?');
            path.push_str(q);
        }
        Ok(rules.allows(&path))
    }

    /// Fetch `url`, serving a fresh-enough cached snapshot without network traffic.
    pub fn fetch_page(&self, url: &str) -> Result<PageSnapshot> {
        let parsed =
            Url::parse(url).map_err(|e| Error::Precondition(format!("bad url {url:?}: {e}")))?;
        let domain = parsed
            .host_str()
            .ok_or_else(|| Error::Precondition(format!("url {url:?} has no host")))?
            .to_ascii_lowercase();
        if self.policy.blocked_domains.contains(&domain) {
            return Err(self.skip(url, format!("domain {domain} is blocked")));
        }
        if self.blocked_at_runtime.lock().unwrap().contains(&domain) {
            return Err(self.skip(url, format!("domain {domain} refused earlier requests")));
        }
        if let Some(snap) = self.cache.lookup(url)? {
            let fresh = match self.policy.cache_ttl {
                None => true,
                Some(ttl) => {
                    let age = Utc::now().signed_duration_since(snap.fetched_at);
                    age.to_std().map_or(true, |a| a <= ttl)
                }
            };
            if fresh {
                return Ok(snap);
            }
        }
        if !self.robots_allow(&parsed, &domain)? {
            return Err(self.skip(url, "disallowed by robots.txt"));
        }
        let resp = self.fetch_with_retries(url, &domain)?;
        if resp.status == 403 || resp.status == 429 {
            self.blocked_at_runtime.lock().unwrap().insert(domain.clone());
            return Err(self.skip(url, format!("HTTP {} from {domain}", resp.status)));
        }
        let snap = PageSnapshot::new(url, resp.status, resp.body)?;
        self.cache.store(&snap)?;
        Ok(snap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Scripted {
        hits: Arc<AtomicUsize>,
        starts: Arc<Mutex<Vec<(String, Instant)>>>,
        fail_first: usize,
    }

    impl Fetcher for Scripted {
        fn fetch(&self, url: &str, _p: &CrawlPolicy) -> Result<FetchResponse> {
            let n = self.hits.fetch_add(1, Ordering::SeqCst);
            self.starts.lock().unwrap().push((url.to_string(), Instant::now()));
            if n < self.fail_first {
                return Err(Error::Transport("connection reset".into()));
            }
            if url.ends_with("/robots.txt") {
                return Ok(FetchResponse {
                    status: 200,
                    body: b"User-agent: *\nDisallow: /private\n".to_vec(),
                });
            }
            Ok(FetchResponse {
                status: 200,
                body: format!("page {url}").into_bytes(),
            })
        }
    }

    fn crawler(delay_ms: u64, fail_first: usize) -> (Crawler, Arc<AtomicUsize>, Arc<Mutex<Vec<(String, Instant)>>>, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let starts = Arc::new(Mutex::new(Vec::new()));
        let policy = CrawlPolicy {
            per_domain_delay: Duration::from_millis(delay_ms),
            blocked_domains: BTreeSet::from(["blocked.test".to_string()]),
            ..Default::default()
        };
        let c = Crawler::new(
            Scripted {
                hits: hits.clone(),
                starts: starts.clone(),
                fail_first,
            },
            SnapshotCache::open(dir.path()).unwrap(),
            policy,
        );
        (c, hits, starts, dir)
    }

    #[test]
    fn blocked_domain_is_skipped() {
        let (c, hits, _, _d) = crawler(0, 0);
        let err = c.fetch_page("https://blocked.test/a").unwrap_err();
        assert!(matches!(err, Error::Skipped { .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 0);
        assert_eq!(c.skipped().len(), 1);
    }

    #[test]
    fn robots_disallow_is_skipped() {
        let (c, _, _, _d) = crawler(0, 0);
        assert!(matches!(
            c.fetch_page("https://a.test/private/x"),
            Err(Error::Skipped { .. })
        ));
        assert!(c.fetch_page("https://a.test/public").is_ok());
    }

    #[test]
    fn retries_transport_errors() {
        let (c, hits, _, _d) = crawler(0, 2);
        let snap = c.fetch_page("https://a.test/p").unwrap();
        assert_eq!(snap.http_status, 200);
        // robots.txt swallowed one failure, then two more attempts for the page
        assert!(hits.load(Ordering::SeqCst) >= 3);
    }

    #[test]
    fn politeness_delay_between_same_domain_starts() {
        let (c, _, starts, _d) = crawler(40, 0);
        let c = Arc::new(c);
        let handles: Vec<_> = (0..4)
            .map(|i| {
                let c = c.clone();
                std::thread::spawn(move || c.fetch_page(&format!("https://a.test/p{i}")).unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let mut times: Vec<Instant> = starts.lock().unwrap().iter().map(|s| s.1).collect();
        times.sort();
        for w in times.windows(2) {
            assert!(w[1] - w[0] >= Duration::from_millis(40), "{:?}", w[1] - w[0]);
        }
    }

    #[test]
    fn cache_roundtrip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SnapshotCache::open(dir.path()).unwrap();
        assert!(cache.lookup("https://x.test/").unwrap().is_none());
        let snap = PageSnapshot::new("https://x.test/", 200, b"<p>hello</p>".to_vec()).unwrap();
        cache.store(&snap).unwrap();
        let back = cache.lookup("https://x.test/").unwrap().unwrap();
        assert_eq!(back, snap);

        // survives reopen
        let reopened = SnapshotCache::open(dir.path()).unwrap();
        assert_eq!(reopened.lookup("https://x.test/").unwrap().unwrap().content_hash, snap.content_hash);

        let blob = cache.blob_path(&snap.content_hash);
        let mut bytes = std::fs::read(&blob).unwrap();
        bytes[0] ^= 1;
        std::fs::write(&blob, bytes).unwrap();
        assert!(matches!(cache.lookup("https://x.test/"), Err(Error::Integrity(_))));
    }

    #[test]
    fn status_range_enforced() {
        assert!(PageSnapshot::new("u", 99, vec![]).is_err());
        assert!(PageSnapshot::new("u", 600, vec![]).is_err());
        assert!(PageSnapshot::new("u", 404, vec![]).is_ok());
    }

    #[test]
    fn robots_rules() {
        let txt = "User-agent: webextractor\nDisallow: /x\nAllow: /x/ok\n\nUser-agent: *\nDisallow: /\n";
        let ours = RobotsRules::parse(txt, "webextractor/0.1");
        assert!(!ours.allows("/x/1"));
        assert!(ours.allows("/x/ok/1"));
        assert!(ours.allows("/y"));
        let other = RobotsRules::parse(txt, "otherbot");
        assert!(!other.allows("/y"));
        assert!(RobotsRules::parse("", "a").allows("/anything"));
    }

    #[test]
    fn policy_config_keys() {
        let p: CrawlPolicy = toml::from_str(
            "delay_ms = 250\ntimeout_ms = 1000\nretries = 1\nuser_agent = \"t\"\nblocked_domains = [\"linkedin.com\"]\n",
        )
        .unwrap();
        assert_eq!(p.per_domain_delay, Duration::from_millis(250));
        assert_eq!(p.max_retries, 1);
        assert!(p.blocked_domains.contains("linkedin.com"));
        assert!(p.respect_robots);
    }
}
