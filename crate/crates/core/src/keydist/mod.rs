//! Key distribution: the proxy's signing key is published as a TLSA record
//! and fetched by agents over DNS-over-HTTPS, so a CDN on the HTTP path
//! cannot substitute it.

pub mod dns;
mod stub;
pub mod tlsa;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use http::{header, Method, Request, StatusCode};
use rand::RngCore;

use crate::clock::SharedClock;
use crate::crypto::PublicKey;
use crate::net::{self, HttpClient};
use crate::rng::SharedRng;

use dns::{Message, TYPE_TLSA};
pub use stub::{StubResolver, StubZone};
pub use tlsa::{emit_tlsa, owner_name, TlsaPayload, TlsaRecord};

pub const DNS_MESSAGE_TYPE: &str = "application/dns-message";

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum KeyDistError {
    #[error("resolver transport failed: {0}")]
    Transport(String),
    #[error("malformed DNS message: {0}")]
    MalformedDns(String),
    #[error("resolver answered with rcode {0}")]
    ResolverFailure(u8),
    #[error("no TLSA record in the answer carries a usable key")]
    RecordsUnparseable,
    #[error("answer is not DNSSEC-authenticated")]
    NotAuthenticated,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeyLookup {
    Enabled(PublicKey),
    /// NXDOMAIN or NODATA: the site does not use InviCloak.
    NotEnabled,
}

/// DNS-over-HTTPS client (POST, RFC 8484 wire format).
#[derive(Debug)]
pub struct DohClient {
    url: String,
    client: HttpClient,
    require_ad: bool,
    rng: SharedRng,
    sent: AtomicU64,
}

impl DohClient {
    pub fn new(url: impl Into<String>, require_ad: bool, rng: SharedRng) -> Self {
        Self::with_client(url, net::http_client(), require_ad, rng)
    }

    pub fn with_client(url: impl Into<String>, client: HttpClient, require_ad: bool, rng: SharedRng) -> Self {
        DohClient {
            url: url.into(),
            client,
            require_ad,
            rng,
            sent: AtomicU64::new(0),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Number of queries put on the wire so far.
    pub fn queries_sent(&self) -> u64 {
        self.sent.load(Ordering::Relaxed)
    }

    pub async fn exchange(&self, query: &Message) -> Result<Message, KeyDistError> {
        let body = query.encode()?;
        let req = Request::builder()
            .method(Method::POST)
            .uri(&self.url)
            .header(header::CONTENT_TYPE, DNS_MESSAGE_TYPE)
            .header(header::ACCEPT, DNS_MESSAGE_TYPE)
            .body(net::full(body))
            .map_err(|e| KeyDistError::Transport(e.to_string()))?;
        self.sent.fetch_add(1, Ordering::Relaxed);
        let resp = self
            .client
            .request(req)
            .await
            .map_err(|e| KeyDistError::Transport(e.to_string()))?;
        if resp.status() != StatusCode::OK {
            return Err(KeyDistError::Transport(format!("HTTP {}", resp.status())));
        }
        let bytes = net::collect(resp.into_body())
            .await
            .map_err(|e| KeyDistError::Transport(e.to_string()))?;
        let answer = Message::decode(&bytes)?;
        if !answer.is_response() || answer.id != query.id {
            return Err(KeyDistError::MalformedDns("answer does not match query".into()));
        }
        if answer.questions != query.questions {
            return Err(KeyDistError::MalformedDns("question section differs".into()));
        }
        Ok(answer)
    }

    /// Uncached lookup of the signing key for `domain`, with the TTL of
    /// the answer.
    pub async fn lookup(&self, domain: &str) -> Result<(KeyLookup, u32), KeyDistError> {
        let owner = owner_name(domain);
        let query = Message::query(self.rng.clone().next_u32() as u16, &owner, TYPE_TLSA);
        let answer = self.exchange(&query).await?;
        interpret(&answer, &owner, self.require_ad)
    }
}

fn interpret(answer: &Message, owner: &str, require_ad: bool) -> Result<(KeyLookup, u32), KeyDistError> {
    match answer.rcode() {
        dns::RCODE_NOERROR => {}
        dns::RCODE_NXDOMAIN => return Ok((KeyLookup::NotEnabled, 0)),
        rcode => return Err(KeyDistError::ResolverFailure(rcode)),
    }
    if require_ad && !answer.authentic_data() {
        return Err(KeyDistError::NotAuthenticated);
    }
    let owner = dns::canonical_name(owner);
    let records: Vec<_> = answer
        .answers
        .iter()
        .filter(|r| r.rtype == TYPE_TLSA && dns::canonical_name(&r.name) == owner)
        .collect();
    if records.is_empty() {
        return Ok((KeyLookup::NotEnabled, 0));
    }
    let ttl = records.iter().map(|r| r.ttl).min().unwrap_or(0);
    records
        .iter()
        .filter_map(|r| TlsaPayload::from_rdata(&r.rdata).ok()?.public_key())
        .next()
        .map(|key| (KeyLookup::Enabled(key), ttl))
        .ok_or(KeyDistError::RecordsUnparseable)
}

#[derive(Debug, Clone)]
struct CachedKey {
    key: PublicKey,
    expires_at: u64,
}

/// Per-domain key cache. Entries live for the record TTL; concurrent
/// lookups for the same domain share one query. Negative answers are not
/// cached.
#[derive(Debug)]
pub struct KeyCache {
    clock: SharedClock,
    slots: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Option<CachedKey>>>>>,
}

impl KeyCache {
    pub fn new(clock: SharedClock) -> Self {
        KeyCache {
            clock,
            slots: Mutex::new(HashMap::new()),
        }
    }

    fn slot(&self, domain: &str) -> Arc<tokio::sync::Mutex<Option<CachedKey>>> {
        let mut slots = self.slots.lock().expect("key cache lock");
        Arc::clone(slots.entry(dns::canonical_name(domain)).or_default())
    }

    /// Cached key for `domain` if still fresh.
    pub fn cached(&self, domain: &str) -> Option<PublicKey> {
        let slot = self.slot(domain);
        let entry = slot.try_lock().ok()?;
        entry
            .as_ref()
            .filter(|c| self.clock.now_secs() < c.expires_at)
            .map(|c| c.key.clone())
    }

    pub fn invalidate(&self, domain: &str) {
        self.slots
            .lock()
            .expect("key cache lock")
            .remove(&dns::canonical_name(domain));
    }

    pub async fn fetch_key(&self, client: &DohClient, domain: &str) -> Result<KeyLookup, KeyDistError> {
        let slot = self.slot(domain);
        let mut entry = slot.lock().await;
        let now = self.clock.now_secs();
        if let Some(cached) = entry.as_ref().filter(|c| now < c.expires_at) {
            return Ok(KeyLookup::Enabled(cached.key.clone()));
        }
        *entry = None;
        let (lookup, ttl) = client.lookup(domain).await?;
        if let KeyLookup::Enabled(key) = &lookup {
            if ttl > 0 {
                *entry = Some(CachedKey {
                    key: key.clone(),
                    expires_at: now + u64::from(ttl),
                });
            }
        }
        Ok(lookup)
    }
}
