use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::snapshot::SnapshotStore;
use super::url::normalize_url;
use crate::{Error, Result};

/// A search backend: `query` in, ranked URLs out.
///
/// Implementations must tolerate concurrent calls.
pub trait SearchEngine: Send + Sync {
    fn id(&self) -> &str;
    fn search(&self, query: &str, k: usize) -> Result<Vec<String>>;
}

impl<E: SearchEngine + ?Sized> SearchEngine for Box<E> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn search(&self, query: &str, k: usize) -> Result<Vec<String>> {
        (**self).search(query, k)
    }
}

/// One execution of one query on one engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultList {
    pub query_text: String,
    pub engine_id: String,
    pub execution_index: usize,
    pub urls: Vec<String>,
    pub retrieved_at: DateTime<Utc>,
    /// The engine call errored out; the list is empty and counts as "not found".
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

impl ResultList {
    pub fn empty(query: &str, engine_id: &str, execution_index: usize) -> Self {
        Self {
            query_text: query.to_string(),
            engine_id: engine_id.to_string(),
            execution_index,
            urls: Vec::new(),
            retrieved_at: Utc::now(),
            failed: false,
        }
    }
}

/// Drops repeats (by normalized URL, first wins) and truncates to `k`.
fn clean_urls(urls: Vec<String>, k: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    urls.into_iter()
        .filter(|u| seen.insert(normalize_url(u)))
        .take(k)
        .collect()
}

/// Runs `query` `n` times, truncating each list to `k`.
///
/// Blank queries short-circuit to `n` empty lists without touching the engine.
/// A failing call yields an empty list flagged `failed`. Every real call is
/// appended to `store` (when given) before this returns.
pub fn execute_repeated(
    engine: &dyn SearchEngine,
    query: &str,
    n: usize,
    k: usize,
    store: Option<&SnapshotStore>,
) -> Result<Vec<ResultList>> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "execute_repeated needs n >= 1 and k >= 1 (got n={n}, k={k})"
        )));
    }
    if query.trim().is_empty() {
        return Ok((0..n)
            .map(|i| ResultList::empty(query, engine.id(), i))
            .collect());
    }
    let mut lists = Vec::with_capacity(n);
    for i in 0..n {
        let mut list = ResultList::empty(query, engine.id(), i);
        match engine.search(query, k) {
            Ok(urls) => list.urls = clean_urls(urls, k),
            Err(e) => {
                log::warn!("search {:?} execution {i} failed: {e}", query);
                list.failed = true;
            }
        }
        if let Some(store) = store {
            store.put(&list)?;
        }
        lists.push(list);
    }
    Ok(lists)
}

/// Token bucket; `acquire` blocks until a token is available.
#[derive(Debug)]
pub struct RateLimiter {
    rate: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64, burst: u32) -> Self {
        assert!(requests_per_second > 0.0, "rate must be positive");
        let burst = f64::from(burst.max(1));
        Self {
            rate: requests_per_second,
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap();
                let (tokens, last) = &mut *state;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.rate)
                    .min(self.burst);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - *tokens) / self.rate)
            };
            std::thread::sleep(wait);
        }
    }
}

/// Retries a flaky engine with exponential backoff.
pub struct Retrying<E> {
    inner: E,
    max_attempts: u32,
    base_delay: Duration,
}

impl<E: SearchEngine> Retrying<E> {
    pub fn new(inner: E, max_attempts: u32, base_delay: Duration) -> Self {
        Self {
            inner,
            max_attempts: max_attempts.max(1),
            base_delay,
        }
    }
}

impl<E: SearchEngine> SearchEngine for Retrying<E> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<String>> {
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            match self.inner.search(query, k) {
                Ok(urls) => return Ok(urls),
                Err(e) => {
                    last = e.to_string();
                    if attempt < self.max_attempts {
                        std::thread::sleep(self.base_delay * 2u32.pow(attempt - 1));
                    }
                }
            }
        }
        Err(Error::Search {
            engine: self.inner.id().to_string(),
            attempts: self.max_attempts,
            message: last,
        })
    }
}

/// Scripted engine for offline runs.
///
/// The script maps a query to the lists returned by successive calls; calls
/// past the end cycle back to the start. Unscripted queries return nothing.
/// With a non-zero dropout probability each URL is independently removed,
/// seeded by (seed, query, call number) so replays are reproducible.
pub struct MockEngine {
    id: String,
    script: HashMap<String, Vec<Vec<String>>>,
    dropout: f64,
    seed: u64,
    calls: Mutex<HashMap<String, usize>>,
}

impl MockEngine {
    pub fn new(script: HashMap<String, Vec<Vec<String>>>) -> Self {
        Self {
            id: "mock".to_string(),
            script,
            dropout: 0.0,
            seed: 0,
            calls: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let script = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Ok(Self::new(script))
    }

    pub fn with_dropout(mut self, probability: f64, seed: u64) -> Self {
        self.dropout = probability.clamp(0.0, 1.0);
        self.seed = seed;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Number of calls made so far for `query`.
    pub fn call_count(&self, query: &str) -> usize {
        self.calls.lock().unwrap().get(query).copied().unwrap_or(0)
    }

    pub fn total_calls(&self) -> usize {
        self.calls.lock().unwrap().values().sum()
    }
}

fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

impl SearchEngine for MockEngine {
    fn id(&self) -> &str {
        &self.id
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<String>> {
        let call = {
            let mut calls = self.calls.lock().unwrap();
            let c = calls.entry(query.to_string()).or_insert(0);
            *c += 1;
            *c - 1
        };
        let Some(lists) = self.script.get(query).filter(|l| !l.is_empty()) else {
            return Ok(Vec::new());
        };
        let mut urls = lists[call % lists.len()].clone();
        if self.dropout > 0.0 {
            let h = fnv1a(query.as_bytes(), 0xcbf2_9ce4_8422_2325 ^ self.seed);
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(&(call as u64).to_le_bytes(), h));
            urls.retain(|_| rng.gen::<f64>() >= self.dropout);
        }
        // execute_repeated dedups before truncating to k
        let _ = k;
        Ok(urls)
    }
}

/// Bing Web Search v7 adapter.
pub struct BingEngine {
    client: reqwest::blocking::Client,
    endpoint: String,
    key: String,
    limiter: RateLimiter,
}

#[derive(Deserialize)]
struct BingResponse {
    #[serde(rename = "webPages")]
    web_pages: Option<BingWebPages>,
}

#[derive(Deserialize)]
struct BingWebPages {
    #[serde(default)]
    value: Vec<BingPage>,
}

#[derive(Deserialize)]
struct BingPage {
    url: String,
}

impl BingEngine {
    pub const DEFAULT_ENDPOINT: &'static str = "https://api.bing.microsoft.com/v7.0/search";
    pub const KEY_VAR: &'static str = "BING_SEARCH_KEY";

    pub fn new(endpoint: impl Into<String>, key: impl Into<String>, requests_per_second: f64) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint: endpoint.into(),
            key: key.into(),
            limiter: RateLimiter::new(requests_per_second, 1),
        })
    }

    /// Reads the subscription key from `BING_SEARCH_KEY`.
    pub fn from_env(endpoint: Option<&str>, requests_per_second: f64) -> Result<Self> {
        let key = std::env::var(Self::KEY_VAR)
            .map_err(|_| Error::Config(format!("{} is not set", Self::KEY_VAR)))?;
        Self::new(endpoint.unwrap_or(Self::DEFAULT_ENDPOINT), key, requests_per_second)
    }
}

impl SearchEngine for BingEngine {
    fn id(&self) -> &str {
        "bing"
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<String>> {
        self.limiter.acquire();
        let fail = |message: String| Error::Search {
            engine: "bing".into(),
            attempts: 1,
            message,
        };
        let resp = self
            .client
            .get(&self.endpoint)
            .header("Ocp-Apim-Subscription-Key", &self.key)
            .query(&[("q", query), ("count", &k.to_string())])
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| fail(e.to_string()))?;
        let body: BingResponse = resp.json().map_err(|e| fail(e.to_string()))?;
        Ok(body
            .web_pages
            .map(|p| p.value.into_iter().map(|v| v.url).take(k).collect())
            .unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn script(q: &str, lists: &[&[&str]]) -> HashMap<String, Vec<Vec<String>>> {
        let lists = lists
            .iter()
            .map(|l| l.iter().map(|s| s.to_string()).collect())
            .collect();
        HashMap::from([(q.to_string(), lists)])
    }

    #[test]
    fn fixed_list_repeats() {
        let engine = MockEngine::new(script("q", &[&["a", "b"]]));
        let lists = execute_repeated(&engine, "q", 3, 10, None).unwrap();
        assert_eq!(lists.len(), 3);
        for (i, l) in lists.iter().enumerate() {
            assert_eq!(l.urls, vec!["a", "b"]);
            assert_eq!(l.execution_index, i);
        }
    }

    #[test]
    fn scripted_lists_in_call_order() {
        let engine = MockEngine::new(script("q", &[&["a"], &["b"], &["c"]]));
        let lists = execute_repeated(&engine, "q", 3, 10, None).unwrap();
        let urls: Vec<_> = lists.iter().map(|l| l.urls[0].as_str()).collect();
        assert_eq!(urls, ["a", "b", "c"]);
    }

    #[test]
    fn blank_query_makes_no_calls() {
        let engine = MockEngine::new(script("", &[&["a"]]));
        let lists = execute_repeated(&engine, "  ", 3, 10, None).unwrap();
        assert_eq!(lists.len(), 3);
        assert!(lists.iter().all(|l| l.urls.is_empty() && !l.failed));
        assert_eq!(engine.total_calls(), 0);
    }

    #[test]
    fn truncates_and_dedups() {
        let engine = MockEngine::new(script(
            "q",
            &[&["http://a.com/", "https://www.a.com", "b", "c", "d"]],
        ));
        let lists = execute_repeated(&engine, "q", 1, 2, None).unwrap();
        assert_eq!(lists[0].urls, vec!["http://a.com/", "b"]);
    }

    struct Flaky {
        fails_before_success: usize,
        calls: AtomicUsize,
    }

    impl SearchEngine for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }
        fn search(&self, _: &str, _: usize) -> Result<Vec<String>> {
            if self.calls.fetch_add(1, Ordering::SeqCst) < self.fails_before_success {
                Err(Error::Search {
                    engine: "flaky".into(),
                    attempts: 1,
                    message: "503".into(),
                })
            } else {
                Ok(vec!["x".into()])
            }
        }
    }

    #[test]
    fn retry_recovers_then_gives_up() {
        let ok = Retrying::new(
            Flaky { fails_before_success: 2, calls: AtomicUsize::new(0) },
            3,
            Duration::ZERO,
        );
        assert_eq!(ok.search("q", 10).unwrap(), vec!["x"]);

        let bad = Retrying::new(
            Flaky { fails_before_success: 100, calls: AtomicUsize::new(0) },
            2,
            Duration::ZERO,
        );
        match bad.search("q", 10) {
            Err(Error::Search { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("expected search error, got {other:?}"),
        }
        let lists = execute_repeated(&bad, "q", 3, 10, None).unwrap();
        assert!(lists.iter().all(|l| l.failed && l.urls.is_empty()));
    }

    #[test]
    fn dropout_is_seeded() {
        let urls: Vec<&str> = vec!["a", "b", "c", "d", "e", "f", "g", "h"];
        let make = || MockEngine::new(script("q", &[&urls])).with_dropout(0.5, 42);
        let a: Vec<_> = (0..5).map({ let e = make(); move |_| e.search("q", 10).unwrap() }).collect();
        let b: Vec<_> = (0..5).map({ let e = make(); move |_| e.search("q", 10).unwrap() }).collect();
        assert_eq!(a, b);
        assert!(a.iter().any(|l| l.len() < urls.len()));
    }

    #[test]
    fn rate_limiter_spaces_calls() {
        let limiter = RateLimiter::new(50.0, 1);
        let start = Instant::now();
        for _ in 0..4 {
            limiter.acquire();
        }
        // first token is free, three more at 20ms each
        assert!(start.elapsed() >= Duration::from_millis(55));
    }
}
