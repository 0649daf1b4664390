//! Load generator and timing helpers. The throughput run pits the sealed
//! path (`/private/blob`) against the proxy's plain streaming path
//! (`/blob`) on the same proxy, origin and client stack.
//!
//! By default the generator behaves like ApacheBench: sealed requests are
//! prepared before the clock starts and responses are counted, not opened,
//! so the figure reflects the proxy's work. A sample of sealed responses is
//! opened afterwards to check they are genuine. `end_to_end` drives the
//! full agent instead, client-side crypto included.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use bytes::Bytes;
use http::{header, Request, StatusCode};
use serde::Serialize;

use crate::agent::{Agent, ClientSessionCache, FetchRequest, KeySource, SiteConfig};
use crate::cdn::fixture::{OriginFixture, Sentinels, MAX_BLOB};
use crate::cdn::harness::proxy_config_text;
use crate::clock::{self, SharedClock};
use crate::crypto::{SigningKeyPair, SymmetricKey};
use crate::net::{self, HttpClient, ServerHandle};
use crate::proxy::{ProxyConfig, ProxyServer};
use crate::rng::SharedRng;
use crate::session::SessionState;
use crate::wire::{self, Envelope, InnerRequest, InnerResponse, SessionId};

/// Payload sizes and request counts: 50,000 requests from 1 KiB to 8 MiB.
pub const STANDARD_MIX: [(usize, usize); 6] = [
    (1 << 10, 20_000),
    (8 << 10, 15_000),
    (64 << 10, 10_000),
    (512 << 10, 4_000),
    (4 << 20, 800),
    (8 << 20, 200),
];

#[derive(Debug, Clone)]
pub struct BenchOptions {
    /// (payload bytes, requests) per step.
    pub mix: Vec<(usize, usize)>,
    pub concurrency: usize,
    pub seed: u64,
    pub end_to_end: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { mix: STANDARD_MIX.to_vec(), concurrency: 64, seed: 1, end_to_end: false }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

/// Nearest-rank percentiles of `samples` (any unit).
pub fn percentiles(samples: &mut [f64]) -> Percentiles {
    if samples.is_empty() {
        return Percentiles::default();
    }
    samples.sort_by(f64::total_cmp);
    let rank = |p: f64| samples[((p * samples.len() as f64).ceil() as usize).clamp(1, samples.len()) - 1];
    Percentiles { p50: rank(0.50), p90: rank(0.90), p99: rank(0.99), max: samples[samples.len() - 1] }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepResult {
    pub payload: usize,
    pub requests: usize,
    pub errors: usize,
    pub seconds: f64,
    pub ops_per_sec: f64,
    pub bytes_per_sec: f64,
    pub latency_ms: Percentiles,
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeComparison {
    pub payload: usize,
    /// Sealed throughput over plain throughput.
    pub ratio: f64,
    pub overhead_share: f64,
    pub sealed: StepResult,
    pub plain: StepResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub mode: &'static str,
    pub concurrency: usize,
    pub total_requests: usize,
    pub sizes: Vec<SizeComparison>,
    /// Total sealed time over total plain time for the whole mix, inverted:
    /// sealed throughput as a share of plain throughput.
    pub aggregate_ratio: f64,
    pub errors: usize,
}

impl BenchReport {
    pub fn min_ratio(&self) -> f64 {
        self.sizes.iter().map(|s| s.ratio).fold(f64::INFINITY, f64::min)
    }

    /// Slope of overhead share against log2(payload). Negative when the
    /// overhead shrinks with larger payloads.
    pub fn overhead_trend(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self.sizes.iter().map(|s| ((s.payload as f64).log2(), s.overhead_share)).collect();
        linear_fit(&pts).slope
    }
}

struct Deployment {
    agent: Arc<Agent>,
    client: HttpClient,
    base: String,
    _servers: Vec<ServerHandle>,
}

async fn deploy(seed: u64) -> std::io::Result<Deployment> {
    let mut rng = SharedRng::seeded(seed);
    let clock: SharedClock = clock::system();
    let site_key = SigningKeyPair::generate(&mut rng);
    let origin = Arc::new(OriginFixture::new(Sentinels::generate(&mut rng), &site_key));
    let origin_srv = net::spawn("127.0.0.1:0", origin).await?;
    let config = ProxyConfig::parse(&proxy_config_text(&origin_srv.url())).map_err(|e| std::io::Error::other(e.to_string()))?;
    let proxy = Arc::new(ProxyServer::new(config, site_key.clone(), clock.clone(), SharedRng::os()));
    let proxy_srv = net::spawn("127.0.0.1:0", proxy).await?;
    let site = SiteConfig::load(br#"{"sensitiveURLs": [{"regex": "^/private/"}], "handshakeURL": "/clientHello"}"#)
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let agent = Agent::new(site, KeySource::Pinned(site_key.public_key()), ClientSessionCache::in_memory(), clock, SharedRng::os());
    Ok(Deployment {
        agent: Arc::new(agent),
        client: net::http_client(),
        base: proxy_srv.url(),
        _servers: vec![origin_srv, proxy_srv],
    })
}

fn step_result(payload: usize, requests: usize, errors: usize, bytes: usize, seconds: f64, mut latencies: Vec<f64>) -> StepResult {
    let seconds = seconds.max(1e-9);
    StepResult {
        payload,
        requests,
        errors,
        seconds,
        ops_per_sec: (requests - errors) as f64 / seconds,
        bytes_per_sec: bytes as f64 / seconds,
        latency_ms: percentiles(&mut latencies),
    }
}

/// Fans `requests` jobs out over `concurrency` tasks. `job(i)` returns the
/// bytes received, or `None` on failure.
async fn drive<F, Fut>(payload: usize, requests: usize, concurrency: usize, job: F) -> StepResult
where
    F: Fn(usize) -> Fut + Send + Sync + 'static,
    Fut: std::future::Future<Output = Option<usize>> + Send,
{
    let next = Arc::new(AtomicUsize::new(0));
    let job = Arc::new(job);
    let started = Instant::now();
    let workers: Vec<_> = (0..concurrency.max(1))
        .map(|_| {
            let (next, job) = (Arc::clone(&next), Arc::clone(&job));
            tokio::spawn(async move {
                let (mut lat, mut errors, mut bytes) = (Vec::new(), 0usize, 0usize);
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= requests {
                        break;
                    }
                    let t = Instant::now();
                    match job(i).await {
                        Some(n) => bytes += n,
                        None => errors += 1,
                    }
                    lat.push(t.elapsed().as_secs_f64() * 1e3);
                }
                (lat, errors, bytes)
            })
        })
        .collect();
    let mut latencies = Vec::with_capacity(requests);
    let (mut errors, mut bytes) = (0, 0);
    for w in workers {
        let (l, e, b) = w.await.unwrap_or_default();
        latencies.extend(l);
        errors += e;
        bytes += b;
    }
    step_result(payload, requests, errors, bytes, started.elapsed().as_secs_f64(), latencies)
}

async fn agent_step(agent: &Arc<Agent>, url: String, payload: usize, requests: usize, concurrency: usize) -> StepResult {
    let agent = Arc::clone(agent);
    let req = Arc::new(FetchRequest::get(url));
    drive(payload, requests, concurrency, move |_| {
        let (agent, req) = (Arc::clone(&agent), Arc::clone(&req));
        async move {
            match agent.fetch(&req).await {
                Ok(r) if r.status == 200 && r.body.len() == payload => Some(r.body.len()),
                _ => None,
            }
        }
    })
    .await
}

async fn send(client: &HttpClient, req: Request<net::Body>) -> Option<Bytes> {
    let resp = client.request(req).await.ok()?;
    if resp.status() != StatusCode::OK {
        return None;
    }
    net::collect(resp.into_body()).await.ok()
}

async fn plain_step(client: &HttpClient, url: String, payload: usize, requests: usize, concurrency: usize) -> StepResult {
    let client = client.clone();
    let url: Arc<str> = url.into();
    drive(payload, requests, concurrency, move |_| {
        let (client, url) = (client.clone(), Arc::clone(&url));
        async move {
            let req = Request::get(&*url).body(net::empty()).ok()?;
            send(&client, req).await.filter(|b| b.len() == payload).map(|b| b.len())
        }
    })
    .await
}

/// Sealed requests are prepared up front; responses are kept only for the
/// last request of each stride of `concurrency`, and opened after timing.
async fn sealed_step(
    client: &HttpClient,
    session: &Arc<SessionState>,
    base: &str,
    payload: usize,
    requests: usize,
    concurrency: usize,
) -> StepResult {
    let now = clock::system().now_secs();
    let target = format!("/private/blob?size={payload}");
    let inner = InnerRequest {
        method: "GET".into(),
        target: target.clone(),
        headers: vec![("host".into(), base.trim_start_matches("http://").as_bytes().to_vec())],
        body: Bytes::new(),
    }
    .encode();
    let envelopes: Arc<Vec<Bytes>> = Arc::new(
        (0..requests)
            .map(|_| session.seal_request(now, &inner).map(|(_, e)| Bytes::from(e)))
            .collect::<Result<_, _>>()
            .unwrap_or_default(),
    );
    if envelopes.len() != requests {
        return step_result(payload, requests, requests, 0, 1e-9, Vec::new());
    }
    let samples = Arc::new(std::sync::Mutex::new(Vec::new()));
    let url: Arc<str> = format!("{base}/private/blob").into();
    let client = client.clone();
    let kept = Arc::clone(&samples);
    let sample_from = requests.saturating_sub(concurrency.max(1));
    let mut result = drive(payload, requests, concurrency, move |i| {
        let (client, url, envelopes, kept) = (client.clone(), Arc::clone(&url), Arc::clone(&envelopes), Arc::clone(&kept));
        async move {
            let req = Request::post(&*url)
                .header(header::CONTENT_TYPE, wire::CONTENT_TYPE)
                .body(net::full(envelopes[i].clone()))
                .ok()?;
            let body = send(&client, req).await.filter(|b| b.len() >= payload)?;
            let n = body.len();
            if i >= sample_from {
                kept.lock().expect("samples lock").push(body);
            }
            Some(n)
        }
    })
    .await;
    // every kept response must open and carry the full payload
    let samples = std::mem::take(&mut *samples.lock().expect("samples lock"));
    let bad = samples
        .into_iter()
        .filter(|body| {
            let opened = Envelope::decode_bytes(body.clone())
                .ok()
                .and_then(|env| session.open_response(now, env).ok())
                .and_then(|o| InnerResponse::decode_bytes(o.payload).ok());
            !matches!(opened, Some(r) if r.status == 200 && r.body.len() == payload)
        })
        .count();
    result.errors += bad;
    result
}

/// Runs the mix over both paths. Within each size the two paths alternate
/// in halves so slow drift in the machine hits both equally.
pub async fn run(opts: &BenchOptions) -> std::io::Result<BenchReport> {
    let d = deploy(opts.seed).await?;
    d.agent
        .eager_handshake(&format!("{}/private/blob", d.base))
        .await
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let session = d
        .agent
        .sessions()
        .get(&d.base, clock::system().now_secs())
        .ok_or_else(|| std::io::Error::other("no session after handshake"))?;
    let c = opts.concurrency;
    let mut sizes = Vec::new();
    let (mut sealed_total, mut plain_total) = (0.0, 0.0);
    for &(payload, requests) in &opts.mix {
        let payload = payload.min(MAX_BLOB);
        let sealed_url = format!("{}/private/blob?size={payload}", d.base);
        let plain_url = format!("{}/blob?size={payload}", d.base);
        let step = |sealed: bool, n: usize| {
            let (d, session, sealed_url, plain_url) = (&d, &session, sealed_url.clone(), plain_url.clone());
            async move {
                match (sealed, opts.end_to_end) {
                    (true, true) => agent_step(&d.agent, sealed_url, payload, n, c).await,
                    (false, true) => agent_step(&d.agent, plain_url, payload, n, c).await,
                    (true, false) => sealed_step(&d.client, session, &d.base, payload, n, c).await,
                    (false, false) => plain_step(&d.client, plain_url, payload, n, c).await,
                }
            }
        };
        // warm connections and allocator for this size
        let warm = c.min(requests).max(1);
        step(false, warm).await;
        step(true, warm).await;

        let first = requests / 2;
        let mut sealed_parts = Vec::new();
        let mut plain_parts = Vec::new();
        if first > 0 {
            plain_parts.push(step(false, first).await);
            sealed_parts.push(step(true, first).await);
        }
        sealed_parts.push(step(true, requests - first).await);
        plain_parts.push(step(false, requests - first).await);
        let sealed = merge(sealed_parts);
        let plain = merge(plain_parts);
        sealed_total += sealed.seconds;
        plain_total += plain.seconds;
        let ratio = if plain.ops_per_sec > 0.0 { sealed.ops_per_sec / plain.ops_per_sec } else { 0.0 };
        sizes.push(SizeComparison { payload, ratio, overhead_share: 1.0 - ratio, sealed, plain });
    }
    let errors = sizes.iter().map(|s| s.sealed.errors + s.plain.errors).sum();
    Ok(BenchReport {
        mode: if opts.end_to_end { "end_to_end" } else { "server" },
        concurrency: c,
        total_requests: opts.mix.iter().map(|m| m.1).sum(),
        aggregate_ratio: if sealed_total > 0.0 { plain_total / sealed_total } else { 0.0 },
        sizes,
        errors,
    })
}

fn merge(parts: Vec<StepResult>) -> StepResult {
    let requests: usize = parts.iter().map(|p| p.requests).sum();
    let errors: usize = parts.iter().map(|p| p.errors).sum();
    let seconds: f64 = parts.iter().map(|p| p.seconds).sum::<f64>().max(1e-9);
    let bytes: f64 = parts.iter().map(|p| p.bytes_per_sec * p.seconds).sum();
    // latency percentiles of the larger half stand in for the whole step
    let latency_ms = parts.iter().max_by_key(|p| p.requests).map(|p| p.latency_ms).unwrap_or_default();
    StepResult {
        payload: parts.first().map_or(0, |p| p.payload),
        requests,
        errors,
        seconds,
        ops_per_sec: (requests - errors) as f64 / seconds,
        bytes_per_sec: bytes / seconds,
        latency_ms,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares.
pub fn linear_fit(points: &[(f64, f64)]) -> LinearFit {
    let n = points.len() as f64;
    if points.len() < 2 {
        return LinearFit { slope: 0.0, intercept: points.first().map_or(0.0, |p| p.1), r2: 0.0 };
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    LinearFit { slope, intercept: my - slope * mx, r2 }
}

#[derive(Debug, Clone, Serialize)]
pub struct SealOpenPoint {
    pub payload: usize,
    /// Median over the repetitions.
    pub seconds: f64,
}

/// Server-side cost of one private exchange: open a sealed request carrying
/// `payload` bytes and seal a response of the same size. Framing and
/// allocation are included.
pub fn seal_open_time(payload: usize, reps: usize) -> Duration {
    let key = SymmetricKey::from_raw([0x5a; 32]);
    let sid = SessionId([0x11; 32]);
    let client = SessionState::new_client(sid, key.clone(), u64::MAX);
    let server = SessionState::new_server(sid, key, u64::MAX, 1 << 20);
    let body = vec![0xa5u8; payload];
    let requests: Vec<Vec<u8>> = (0..reps.max(1)).map(|_| client.seal_request(0, &body).expect("seal").1).collect();
    let mut samples: Vec<f64> = Vec::with_capacity(requests.len());
    for req in requests {
        let t = Instant::now();
        let env = Envelope::decode_bytes(req.into()).expect("own envelope");
        let opened = server.open_request(0, env).expect("own envelope opens");
        let resp = server.seal_response(0, opened.seq, &opened.payload).expect("seal");
        std::hint::black_box(&resp);
        samples.push(t.elapsed().as_secs_f64());
    }
    Duration::from_secs_f64(percentiles(&mut samples).p50)
}

/// Doubling sizes from 2 KiB to 8 MiB.
pub fn seal_open_sizes() -> Vec<usize> {
    (11..=23).map(|s| 1usize << s).collect()
}

pub fn seal_open_curve(reps: usize) -> Vec<SealOpenPoint> {
    seal_open_sizes()
        .into_iter()
        .map(|payload| SealOpenPoint { payload, seconds: seal_open_time(payload, reps).as_secs_f64() })
        .collect()
}
