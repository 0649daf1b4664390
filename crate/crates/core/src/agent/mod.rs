//! The client-side agent: decides per URL whether a request is private,
//! keeps one session per origin, and tunnels private requests as sealed
//! envelopes. A private request is never sent in plaintext, whatever
//! fails along the way.

mod cache;
mod config;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use bytes::Bytes;
use http::header::{self, HeaderName, HeaderValue};
use http::{HeaderMap, Method, Request, Uri};
use serde::Serialize;

use crate::clock::SharedClock;
use crate::crypto::PublicKey;
use crate::keydist::{DohClient, KeyCache, KeyDistError, KeyLookup};
use crate::net::{self, HttpClient};
use crate::rng::SharedRng;
use crate::session::{self, SessionError, SessionState};
use crate::wire::{self, Envelope, HeaderList, InnerRequest, InnerResponse, ServerHello, WireError};

pub use cache::ClientSessionCache;
pub use config::{HandshakeMode, SiteConfig, SiteConfigError, MASKED_USER_AGENT};

pub const DEFAULT_USER_AGENT: &str = concat!("invicloak-agent/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("key lookup failed: {0}")]
    KeyDist(#[from] KeyDistError),
    #[error("the URL is private but the site publishes no key")]
    NotEnabled,
    #[error("handshake failed: {0}")]
    Handshake(SessionError),
    #[error("handshake endpoint answered HTTP {0}")]
    HandshakeHttp(u16),
    #[error("sealed request rejected with HTTP {0}")]
    Rejected(u16),
    #[error("sealed response failed verification: {0}")]
    Response(SessionError),
    #[error("malformed sealed response: {0}")]
    Malformed(WireError),
    #[error("session: {0}")]
    Session(SessionError),
    #[error("session cache: {0}")]
    Cache(String),
}

impl AgentError {
    /// Errors that indicate an attack or a misbehaving party on the path,
    /// as opposed to plumbing failures.
    pub fn is_security(&self) -> bool {
        matches!(
            self,
            AgentError::KeyDist(KeyDistError::NotAuthenticated | KeyDistError::RecordsUnparseable)
                | AgentError::NotEnabled
                | AgentError::Handshake(_)
                | AgentError::Rejected(_)
                | AgentError::Response(_)
                | AgentError::Malformed(_)
        )
    }
}

/// Where the proxy's signing key comes from.
#[derive(Debug)]
pub enum KeySource {
    Dns { doh: DohClient, cache: KeyCache },
    /// A key obtained out of band, e.g. from a local TLSA file.
    Pinned(PublicKey),
}

#[derive(Debug, Default)]
struct Counters {
    handshakes: AtomicU64,
    hellos_sent: AtomicU64,
    crypto_ops: AtomicU64,
    round_trips: AtomicU64,
    plain_fetches: AtomicU64,
    sealed_fetches: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct AgentCounters {
    pub handshakes: u64,
    pub hellos_sent: u64,
    /// Seals, opens and handshake key agreements.
    pub crypto_ops: u64,
    /// HTTP exchanges with the site (DNS queries not included).
    pub round_trips: u64,
    pub plain_fetches: u64,
    pub sealed_fetches: u64,
}

fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::Relaxed);
}

#[derive(Debug, Clone)]
pub struct FetchRequest {
    pub method: String,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Bytes,
}

impl FetchRequest {
    pub fn get(url: impl Into<String>) -> Self {
        FetchRequest {
            method: "GET".into(),
            url: url.into(),
            headers: Vec::new(),
            body: Bytes::new(),
        }
    }

    pub fn post(url: impl Into<String>, body: impl Into<Bytes>) -> Self {
        FetchRequest {
            method: "POST".into(),
            body: body.into(),
            ..Self::get(url)
        }
    }

    pub fn header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }
}

#[derive(Debug, Clone)]
pub struct FetchResponse {
    pub status: u16,
    pub headers: HeaderList,
    pub body: Bytes,
    /// Whether the exchange went through the encrypted channel.
    pub sealed: bool,
}

impl FetchResponse {
    pub fn header_values<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a [u8]> + 'a {
        self.headers
            .iter()
            .filter(move |(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_slice())
    }
}

struct Parsed {
    uri: Uri,
    origin: String,
    host: String,
}

fn parse_url(url: &str) -> Result<Parsed, AgentError> {
    let uri: Uri = url.parse().map_err(|e| AgentError::InvalidRequest(format!("{url}: {e}")))?;
    let (Some(scheme), Some(authority)) = (uri.scheme_str(), uri.authority()) else {
        return Err(AgentError::InvalidRequest(format!("{url}: not an absolute URL")));
    };
    let origin = format!("{scheme}://{authority}");
    let host = authority.host().to_string();
    Ok(Parsed { uri, origin, host })
}

#[derive(Debug)]
pub struct Agent {
    config: SiteConfig,
    keys: KeySource,
    sessions: ClientSessionCache,
    http: HttpClient,
    clock: SharedClock,
    rng: SharedRng,
    inflight: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    counters: Counters,
}

impl Agent {
    pub fn new(config: SiteConfig, keys: KeySource, sessions: ClientSessionCache, clock: SharedClock, rng: SharedRng) -> Self {
        Agent {
            config,
            keys,
            sessions,
            http: net::http_client(),
            clock,
            rng,
            inflight: Mutex::new(HashMap::new()),
            counters: Counters::default(),
        }
    }

    pub fn config(&self) -> &SiteConfig {
        &self.config
    }

    pub fn sessions(&self) -> &ClientSessionCache {
        &self.sessions
    }

    pub fn counters(&self) -> AgentCounters {
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        let c = &self.counters;
        AgentCounters {
            handshakes: get(&c.handshakes),
            hellos_sent: get(&c.hellos_sent),
            crypto_ops: get(&c.crypto_ops),
            round_trips: get(&c.round_trips),
            plain_fetches: get(&c.plain_fetches),
            sealed_fetches: get(&c.sealed_fetches),
        }
    }

    fn user_agent<'a>(&self, req: &'a FetchRequest) -> &'a str {
        if self.config.mask_user_agent {
            return MASKED_USER_AGENT;
        }
        req.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case("user-agent"))
            .map_or(DEFAULT_USER_AGENT, |(_, v)| v.as_str())
    }

    pub async fn fetch(&self, req: &FetchRequest) -> Result<FetchResponse, AgentError> {
        let parsed = parse_url(&req.url)?;
        let target = parsed.uri.path_and_query().map_or("/", |pq| pq.as_str());
        if self.config.is_sensitive(target) {
            self.sealed_fetch(req, &parsed).await
        } else {
            self.plain_fetch(req, &parsed).await
        }
    }

    /// Called once the landing page has loaded. In eager mode this sets up
    /// the session ahead of the first private request.
    pub async fn on_landing(&self, url: &str) -> Result<(), AgentError> {
        if self.config.handshake_mode == HandshakeMode::Eager {
            self.eager_handshake(url).await?;
        }
        Ok(())
    }

    /// Ensures a live session for the URL's origin. Idempotent; concurrent
    /// callers share one handshake.
    pub async fn eager_handshake(&self, url: &str) -> Result<(), AgentError> {
        let parsed = parse_url(url)?;
        self.session_for(&parsed).await.map(|_| ())
    }

    async fn exchange(&self, req: Request<net::Body>) -> Result<(u16, HeaderMap, Bytes), AgentError> {
        bump(&self.counters.round_trips);
        let resp = self
            .http
            .request(req)
            .await
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let (parts, body) = resp.into_parts();
        let body = net::collect(body).await.map_err(|e| AgentError::Transport(e.to_string()))?;
        Ok((status, parts.headers, body))
    }

    fn post_opaque(&self, url: &str, user_agent: &str, body: Vec<u8>) -> Result<Request<net::Body>, AgentError> {
        Request::builder()
            .method(Method::POST)
            .uri(url)
            .header(header::CONTENT_TYPE, wire::CONTENT_TYPE)
            .header(header::USER_AGENT, user_agent)
            .body(net::full(body))
            .map_err(|e| AgentError::InvalidRequest(e.to_string()))
    }

    async fn plain_fetch(&self, req: &FetchRequest, parsed: &Parsed) -> Result<FetchResponse, AgentError> {
        let bad = |e: &dyn std::fmt::Display| AgentError::InvalidRequest(e.to_string());
        let method = Method::from_bytes(req.method.as_bytes()).map_err(|e| bad(&e))?;
        let mut builder = Request::builder().method(method).uri(parsed.uri.clone());
        for (name, value) in &req.headers {
            if name.eq_ignore_ascii_case("user-agent") {
                continue;
            }
            builder = builder.header(name.as_str(), value.as_str());
        }
        let request = builder
            .header(header::USER_AGENT, self.user_agent(req))
            .body(net::full(req.body.clone()))
            .map_err(|e| bad(&e))?;
        let (status, headers, body) = self.exchange(request).await?;
        bump(&self.counters.plain_fetches);
        Ok(FetchResponse {
            status,
            headers: headers
                .iter()
                .map(|(n, v)| (n.as_str().to_string(), v.as_bytes().to_vec()))
                .collect(),
            body,
            sealed: false,
        })
    }

    fn inner_request(&self, req: &FetchRequest, parsed: &Parsed) -> Result<InnerRequest, AgentError> {
        let mut headers: HeaderList = Vec::with_capacity(req.headers.len() + 2);
        if let Some(authority) = parsed.uri.authority() {
            headers.push(("host".into(), authority.as_str().as_bytes().to_vec()));
        }
        headers.push(("user-agent".into(), self.user_agent(req).as_bytes().to_vec()));
        for (name, value) in &req.headers {
            let lower = name.to_ascii_lowercase();
            if lower == "host" || lower == "user-agent" {
                continue;
            }
            HeaderName::from_bytes(lower.as_bytes())
                .map_err(|e| AgentError::InvalidRequest(format!("header {name}: {e}")))?;
            HeaderValue::from_str(value).map_err(|e| AgentError::InvalidRequest(format!("header {name}: {e}")))?;
            headers.push((lower, value.as_bytes().to_vec()));
        }
        let inner = InnerRequest {
            method: req.method.clone(),
            target: parsed.uri.path_and_query().map_or("/", |pq| pq.as_str()).to_string(),
            headers,
            body: req.body.clone(),
        };
        if !inner.is_encodable() {
            return Err(AgentError::InvalidRequest("method or target too long".into()));
        }
        Ok(inner)
    }

    async fn sealed_fetch(&self, req: &FetchRequest, parsed: &Parsed) -> Result<FetchResponse, AgentError> {
        let plaintext = self.inner_request(req, parsed)?.encode();
        let target = parsed.uri.path_and_query().map_or("/", |pq| pq.as_str());
        let outer_url = format!("{}{}", parsed.origin, self.config.outer_path(target));
        let user_agent = self.user_agent(req);
        let mut retried = false;
        loop {
            let session = self.session_for(parsed).await?;
            let now = self.clock.now_secs();
            let sealed = self
                .sessions
                .sealing(&parsed.origin, &session, || session.seal_request(now, &plaintext))
                .map_err(|e| AgentError::Cache(e.to_string()))?;
            let (seq, envelope) = match sealed {
                Ok(v) => v,
                Err(SessionError::SessionExpired) if !retried => {
                    retried = true;
                    self.forget(&parsed.origin)?;
                    continue;
                }
                Err(e) => return Err(AgentError::Session(e)),
            };
            bump(&self.counters.crypto_ops);
            let (status, _, body) = self.exchange(self.post_opaque(&outer_url, user_agent, envelope)?).await?;
            match status {
                200 => {
                    let env = Envelope::decode_bytes(body).map_err(AgentError::Malformed)?;
                    let opened = session
                        .open_response_for(self.clock.now_secs(), env, seq)
                        .map_err(AgentError::Response)?;
                    bump(&self.counters.crypto_ops);
                    let inner = InnerResponse::decode_bytes(opened.payload).map_err(AgentError::Malformed)?;
                    bump(&self.counters.sealed_fetches);
                    return Ok(FetchResponse {
                        status: inner.status,
                        headers: inner.headers,
                        body: inner.body,
                        sealed: true,
                    });
                }
                401 if !retried => {
                    retried = true;
                    self.forget(&parsed.origin)?;
                }
                other => return Err(AgentError::Rejected(other)),
            }
        }
    }

    fn forget(&self, origin: &str) -> Result<(), AgentError> {
        self.sessions.remove(origin).map_err(|e| AgentError::Cache(e.to_string()))
    }

    async fn session_for(&self, parsed: &Parsed) -> Result<Arc<SessionState>, AgentError> {
        if let Some(s) = self.sessions.get(&parsed.origin, self.clock.now_secs()) {
            return Ok(s);
        }
        let slot = {
            let mut inflight = self.inflight.lock().expect("inflight lock");
            Arc::clone(inflight.entry(parsed.origin.clone()).or_default())
        };
        let _turn = slot.lock().await;
        if let Some(s) = self.sessions.get(&parsed.origin, self.clock.now_secs()) {
            return Ok(s);
        }
        let state = Arc::new(self.handshake(parsed).await?);
        self.sessions
            .put(&parsed.origin, Arc::clone(&state))
            .map_err(|e| AgentError::Cache(e.to_string()))?;
        Ok(state)
    }

    async fn public_key(&self, domain: &str) -> Result<PublicKey, AgentError> {
        match &self.keys {
            KeySource::Pinned(key) => Ok(key.clone()),
            KeySource::Dns { doh, cache } => match cache.fetch_key(doh, domain).await? {
                KeyLookup::Enabled(key) => Ok(key),
                KeyLookup::NotEnabled => Err(AgentError::NotEnabled),
            },
        }
    }

    async fn handshake(&self, parsed: &Parsed) -> Result<SessionState, AgentError> {
        let mut rng = self.rng.clone();
        let (hello, pending) = session::client_begin(&mut rng).map_err(AgentError::Handshake)?;
        let url = format!("{}{}", parsed.origin, self.config.handshake_url);
        let domain = self.config.key_domain.as_deref().unwrap_or(&parsed.host);
        let request = self.post_opaque(&url, self.user_agent_default(), hello.encode())?;
        bump(&self.counters.hellos_sent);
        let (key, reply) = tokio::join!(self.public_key(domain), self.exchange(request));
        let key = key?;
        let (status, _, body) = reply?;
        if status != 200 {
            return Err(AgentError::HandshakeHttp(status));
        }
        let server_hello = ServerHello::decode(&body).map_err(|e| AgentError::Handshake(e.into()))?;
        let state = session::client_complete(pending, &server_hello, &key, self.clock.now_secs())
            .map_err(AgentError::Handshake)?;
        bump(&self.counters.crypto_ops);
        bump(&self.counters.handshakes);
        Ok(state)
    }

    fn user_agent_default(&self) -> &'static str {
        if self.config.mask_user_agent {
            MASKED_USER_AGENT
        } else {
            DEFAULT_USER_AGENT
        }
    }
}
