#![allow(dead_code)]

use std::sync::{Arc, Mutex, RwLock};

use bytes::Bytes;
use http::{header, HeaderMap, Request, Response, StatusCode};
use hyper::body::Incoming;
use invicloak::agent::{Agent, ClientSessionCache, HandshakeMode, KeySource, SiteConfig};
use invicloak::cdn::harness::{proxy_config_text, site_config_json, DEFAULT_NOW, HANDSHAKE_PATH, KEY_DOMAIN};
use invicloak::clock::{ManualClock, SharedClock};
use invicloak::crypto::SigningKeyPair;
use invicloak::keydist::{emit_tlsa, DohClient, KeyCache, StubResolver, StubZone};
use invicloak::net::{self, Body, Handler, HttpClient, ServerHandle};
use invicloak::proxy::{ProxyConfig, ProxyServer};
use invicloak::rng::SharedRng;
use invicloak::wire;

/// What the origin received.
#[derive(Debug, Clone)]
pub struct Seen {
    pub method: String,
    pub target: String,
    pub headers: Vec<(String, String)>,
    pub body: Bytes,
}

impl Seen {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
    }
}

pub const ORIGIN_TOKEN: &str = "tok-8d1f7e2a";

/// Records every request and echoes it back. `/set-cookie` issues the
/// auth cookie plus a public one.
#[derive(Debug, Default)]
pub struct EchoOrigin {
    seen: Mutex<Vec<Seen>>,
}

impl EchoOrigin {
    pub fn seen(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }

    pub fn count(&self) -> usize {
        self.seen.lock().unwrap().len()
    }

    pub fn last(&self) -> Seen {
        self.seen.lock().unwrap().last().cloned().expect("origin saw nothing")
    }
}

fn header_pairs(headers: &HeaderMap) -> Vec<(String, String)> {
    headers
        .iter()
        .map(|(n, v)| (n.as_str().to_string(), String::from_utf8_lossy(v.as_bytes()).into_owned()))
        .collect()
}

impl Handler for EchoOrigin {
    async fn handle(&self, req: Request<Incoming>) -> Response<Body> {
        let (parts, body) = req.into_parts();
        let body = net::collect(body).await.unwrap_or_default();
        let target = parts.uri.path_and_query().map_or("/", |pq| pq.as_str()).to_string();
        let seen = Seen {
            method: parts.method.to_string(),
            target: target.clone(),
            headers: header_pairs(&parts.headers),
            body: body.clone(),
        };
        self.seen.lock().unwrap().push(seen);
        let mut echo = format!("{} {}\n", parts.method, target).into_bytes();
        echo.extend_from_slice(&body);
        let mut resp = Response::builder()
            .status(StatusCode::OK)
            .header(header::CONTENT_TYPE, "text/plain")
            .header("x-origin", "echo")
            .header(header::PROXY_AUTHENTICATE, "Basic");
        if parts.uri.path().ends_with("/set-cookie") {
            resp = resp
                .header(header::SET_COOKIE, format!("token={ORIGIN_TOKEN}; Path=/; HttpOnly"))
                .header(header::SET_COOKIE, "theme=dark");
        }
        resp.body(net::full(echo)).unwrap()
    }
}

/// Lets a test replace the proxy behind a fixed address, e.g. to model a
/// restart that loses every session.
#[derive(Debug)]
pub struct SwapProxy(RwLock<Arc<ProxyServer>>);

impl SwapProxy {
    pub fn current(&self) -> Arc<ProxyServer> {
        Arc::clone(&self.0.read().unwrap())
    }

    pub fn replace(&self, proxy: ProxyServer) {
        *self.0.write().unwrap() = Arc::new(proxy);
    }
}

impl Handler for SwapProxy {
    async fn handle(&self, req: Request<Incoming>) -> Response<Body> {
        let proxy = self.current();
        proxy.handle(req).await
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    None,
    /// Answer the ClientHello with this status.
    HelloStatus(u16),
    /// Answer the ClientHello with 200 and junk.
    HelloGarbage,
    /// Relay the ServerHello with its last byte flipped.
    HelloFlip,
    /// Answer sealed requests with this status without forwarding.
    SealedStatus(u16),
    /// Forward, then flip one ciphertext byte of the answer.
    SealedFlip,
    /// Forward, then cut the answer short.
    SealedTruncate,
    /// Forward, then answer with the previous sealed response instead.
    SealedReplay,
    /// Forward, then answer 200 with a plaintext body.
    SealedPlaintext,
}

/// One request/response pair as seen on the CDN hop.
#[derive(Debug, Clone)]
pub struct Exchange {
    pub method: String,
    pub target: String,
    pub headers: Vec<(String, String)>,
    pub body: Bytes,
    pub status: u16,
    pub response_headers: Vec<(String, String)>,
    pub response_body: Bytes,
}

impl Exchange {
    pub fn contains(&self, needle: &[u8]) -> bool {
        let hit = |hay: &[u8]| hay.windows(needle.len()).any(|w| w == needle);
        hit(self.target.as_bytes())
            || self.headers.iter().any(|(n, v)| hit(n.as_bytes()) || hit(v.as_bytes()))
            || hit(&self.body)
            || self.response_headers.iter().any(|(_, v)| hit(v.as_bytes()))
            || hit(&self.response_body)
    }

    pub fn is_sealed_request(&self) -> bool {
        self.method == "POST"
            && self.target != HANDSHAKE_PATH
            && self.headers.iter().any(|(n, v)| n == "content-type" && v == wire::CONTENT_TYPE)
    }
}

/// A relay on the CDN hop that logs both directions and can misbehave.
#[derive(Debug)]
pub struct Tap {
    upstream: String,
    client: HttpClient,
    fault: Mutex<Fault>,
    log: Mutex<Vec<Exchange>>,
    last_sealed: Mutex<Option<Bytes>>,
}

impl Tap {
    pub fn new(upstream: String) -> Self {
        Tap {
            upstream,
            client: net::http_client(),
            fault: Mutex::new(Fault::None),
            log: Mutex::new(Vec::new()),
            last_sealed: Mutex::new(None),
        }
    }

    pub fn set_fault(&self, fault: Fault) {
        *self.fault.lock().unwrap() = fault;
    }

    pub fn log(&self) -> Vec<Exchange> {
        self.log.lock().unwrap().clone()
    }

    pub fn clear(&self) {
        self.log.lock().unwrap().clear();
    }

    async fn forward(&self, method: &http::Method, target: &str, headers: &HeaderMap, body: Bytes) -> (u16, HeaderMap, Bytes) {
        let mut req = Request::builder().method(method).uri(format!("{}{target}", self.upstream));
        for (n, v) in headers {
            req = req.header(n, v);
        }
        match self.client.request(req.body(net::full(body)).unwrap()).await {
            Ok(resp) => {
                let (parts, body) = resp.into_parts();
                (parts.status.as_u16(), parts.headers, net::collect(body).await.unwrap_or_default())
            }
            Err(_) => (502, HeaderMap::new(), Bytes::from_static(b"bad gateway\n")),
        }
    }

    async fn relay(&self, exchange: &Exchange, headers: &HeaderMap, method: &http::Method) -> (u16, HeaderMap, Bytes) {
        let fault = self.fault.lock().unwrap().clone();
        let hello = exchange.target == HANDSHAKE_PATH;
        let sealed = exchange.is_sealed_request();
        let canned = |status: u16, body: &'static [u8]| (status, HeaderMap::new(), Bytes::from_static(body));
        match fault {
            Fault::HelloStatus(s) if hello => return canned(s, b"nope\n"),
            Fault::HelloGarbage if hello => return canned(200, b"\x01garbage"),
            Fault::SealedStatus(s) if sealed => return canned(s, b"nope\n"),
            _ => {}
        }
        let (status, h, mut body) = self.forward(method, &exchange.target, headers, exchange.body.clone()).await;
        match fault {
            Fault::HelloFlip if hello && !body.is_empty() => {
                let mut b = body.to_vec();
                *b.last_mut().unwrap() ^= 0x01;
                body = b.into();
            }
            Fault::SealedFlip if sealed && body.len() > 60 => {
                let mut b = body.to_vec();
                b[60] ^= 0x80;
                body = b.into();
            }
            Fault::SealedTruncate if sealed => body = body.slice(..body.len().min(30)),
            Fault::SealedReplay if sealed => {
                let previous = self.last_sealed.lock().unwrap().replace(body.clone());
                if let Some(p) = previous {
                    body = p;
                }
            }
            Fault::SealedPlaintext if sealed => body = Bytes::from_static(b"HTTP/1.1 200 OK\r\n\r\nhello"),
            _ => {}
        }
        (status, h, body)
    }
}

impl Handler for Tap {
    async fn handle(&self, req: Request<Incoming>) -> Response<Body> {
        let (parts, body) = req.into_parts();
        let body = net::collect(body).await.unwrap_or_default();
        let mut exchange = Exchange {
            method: parts.method.to_string(),
            target: parts.uri.path_and_query().map_or("/", |pq| pq.as_str()).to_string(),
            headers: header_pairs(&parts.headers),
            body,
            status: 0,
            response_headers: Vec::new(),
            response_body: Bytes::new(),
        };
        let mut fwd = parts.headers.clone();
        fwd.remove(header::HOST);
        let (status, headers, body) = self.relay(&exchange, &fwd, &parts.method).await;
        exchange.status = status;
        exchange.response_headers = header_pairs(&headers);
        exchange.response_body = body.clone();
        self.log.lock().unwrap().push(exchange);
        let mut resp = Response::builder().status(status);
        for (n, v) in &headers {
            if n != header::CONTENT_LENGTH && n != header::TRANSFER_ENCODING {
                resp = resp.header(n, v);
            }
        }
        resp.body(net::full(body)).unwrap()
    }
}

pub struct Stack {
    pub clock: ManualClock,
    pub key: SigningKeyPair,
    pub origin: Arc<EchoOrigin>,
    pub proxy: Arc<SwapProxy>,
    pub tap: Arc<Tap>,
    pub resolver: Arc<StubResolver>,
    pub origin_url: String,
    pub proxy_url: String,
    /// Where agents connect: the tap in front of the proxy.
    pub front: String,
    pub resolver_url: String,
    seed: u64,
    _servers: Vec<ServerHandle>,
}

pub struct AgentOptions {
    pub mode: HandshakeMode,
    pub mask_user_agent: bool,
    pub resolver_url: Option<String>,
}

impl Default for AgentOptions {
    fn default() -> Self {
        AgentOptions {
            mode: HandshakeMode::OnDemand,
            mask_user_agent: false,
            resolver_url: None,
        }
    }
}

impl Stack {
    pub async fn start(seed: u64) -> Stack {
        Self::start_with_origin(seed, None).await
    }

    /// `origin_url` overrides where the proxy forwards, e.g. to a closed port.
    pub async fn start_with_origin(seed: u64, origin_url: Option<String>) -> Stack {
        let clock = ManualClock::new(DEFAULT_NOW);
        let key = SigningKeyPair::generate(&mut SharedRng::seeded(seed));
        let origin = Arc::new(EchoOrigin::default());
        let origin_srv = net::spawn("127.0.0.1:0", Arc::clone(&origin)).await.unwrap();
        let origin_url = origin_url.unwrap_or_else(|| origin_srv.url());
        let proxy = Arc::new(SwapProxy(RwLock::new(Arc::new(Self::new_proxy(&origin_url, &key, &clock, seed)))));
        let proxy_srv = net::spawn("127.0.0.1:0", Arc::clone(&proxy)).await.unwrap();
        let tap = Arc::new(Tap::new(proxy_srv.url()));
        let tap_srv = net::spawn("127.0.0.1:0", Arc::clone(&tap)).await.unwrap();
        let mut zone = StubZone::new();
        zone.insert_tlsa(&emit_tlsa(&key.public_key(), KEY_DOMAIN));
        let resolver = Arc::new(StubResolver::new(zone, true));
        let dns_srv = net::spawn("127.0.0.1:0", Arc::clone(&resolver)).await.unwrap();
        Stack {
            clock,
            key,
            origin,
            proxy,
            tap,
            resolver,
            origin_url,
            proxy_url: proxy_srv.url(),
            front: tap_srv.url(),
            resolver_url: format!("{}/dns-query", dns_srv.url()),
            seed,
            _servers: vec![origin_srv, proxy_srv, tap_srv, dns_srv],
        }
    }

    fn new_proxy(origin_url: &str, key: &SigningKeyPair, clock: &ManualClock, seed: u64) -> ProxyServer {
        let config = ProxyConfig::parse(&proxy_config_text(origin_url)).unwrap();
        let clock: SharedClock = Arc::new(clock.clone());
        ProxyServer::new(config, key.clone(), clock, SharedRng::seeded(seed ^ 0x5eed))
    }

    /// Swaps in a fresh proxy with the same key and an empty session store.
    pub fn restart_proxy(&self) {
        self.proxy
            .replace(Self::new_proxy(&self.origin_url, &self.key, &self.clock, self.seed.wrapping_add(1)));
    }

    pub fn url(&self, target: &str) -> String {
        format!("{}{target}", self.front)
    }

    pub fn agent(&self) -> Agent {
        self.agent_with(AgentOptions::default())
    }

    pub fn agent_with(&self, opts: AgentOptions) -> Agent {
        let resolver = opts.resolver_url.unwrap_or_else(|| self.resolver_url.clone());
        let mut json: serde_json::Value = serde_json::from_str(&site_config_json(&resolver, opts.mode)).unwrap();
        json["maskUserAgent"] = opts.mask_user_agent.into();
        let config = SiteConfig::load(json.to_string().as_bytes()).unwrap();
        let clock: SharedClock = Arc::new(self.clock.clone());
        let keys = KeySource::Dns {
            doh: DohClient::new(resolver, true, SharedRng::seeded(self.seed ^ 0xd05)),
            cache: KeyCache::new(Arc::clone(&clock)),
        };
        Agent::new(config, keys, ClientSessionCache::in_memory(), clock, SharedRng::seeded(self.seed ^ 0xa6e))
    }
}
