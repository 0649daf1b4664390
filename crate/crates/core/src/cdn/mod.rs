//! A CDN edge in front of the proxy. It terminates the client's HTTP, keeps
//! a shared cache, and can be switched into a number of hostile modes. It
//! records everything it sees so a run can be scanned for leaked secrets.

mod cache;
pub mod fixture;
pub mod harness;
pub mod mutate;
pub mod report;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use base64::Engine as _;
use bytes::Bytes;
use http::{header, HeaderMap, Method, Request, Response, StatusCode};
use hyper::body::Incoming;
use serde::{Serialize, Serializer};

use crate::clock::SharedClock;
use crate::crypto::{PublicKey, SigningKeyPair};
use crate::integrity;
use crate::net::{self, Body, Handler, HttpClient};
use crate::rng::SharedRng;
use crate::session::{self, ServerHandshakeConfig, SessionState, SessionStore};
use crate::wire::{self, ClientHello, Envelope, ServerHello, SessionId};

pub use cache::{cacheable_ttl, CacheEntry, CdnCache};
pub use mutate::{Mutation, MutationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Hop {
    ClientToCdn,
    CdnToClient,
    CdnToUpstream,
    UpstreamToCdn,
    /// Plaintext the CDN recovered by opening sealed traffic.
    CdnDecrypted,
}

fn b64<S: Serializer>(body: &Bytes, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(body))
}

#[derive(Debug, Clone, Serialize)]
pub struct TranscriptEntry {
    pub index: usize,
    pub hop: Hop,
    pub method: String,
    pub target: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    pub headers: Vec<(String, String)>,
    #[serde(serialize_with = "b64", rename = "body_b64")]
    pub body: Bytes,
}

impl TranscriptEntry {
    pub fn contains(&self, needle: &[u8]) -> bool {
        let hit = |hay: &[u8]| !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle);
        hit(self.target.as_bytes())
            || self.headers.iter().any(|(n, v)| hit(n.as_bytes()) || hit(v.as_bytes()))
            || hit(&self.body)
    }
}

#[derive(Debug, Default)]
pub struct Transcript(Mutex<Vec<TranscriptEntry>>);

impl Transcript {
    fn record(&self, hop: Hop, method: &str, target: &str, status: Option<u16>, headers: &HeaderMap, body: &Bytes) {
        let mut entries = self.0.lock().expect("transcript lock");
        let index = entries.len();
        entries.push(TranscriptEntry {
            index,
            hop,
            method: method.to_string(),
            target: target.to_string(),
            status,
            headers: headers
                .iter()
                .map(|(n, v)| (n.as_str().to_string(), String::from_utf8_lossy(v.as_bytes()).into_owned()))
                .collect(),
            body: body.clone(),
        });
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.0.lock().expect("transcript lock").clone()
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("transcript lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.0.lock().expect("transcript lock").clear();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum TamperTarget {
    /// The first sealed request.
    Request,
    /// The first sealed response.
    Response,
    /// The first ServerHello.
    Handshake,
    /// A public object, by path.
    Object(String),
}

#[derive(Debug, Clone)]
pub enum AdversaryMode {
    Honest,
    /// Relays honestly; exists so reports can tell a deliberate
    /// eavesdropping run from a plain one.
    PassiveLog,
    /// Mutates the first message matching `target`, once.
    Tamper { target: TamperTarget, mutation: Mutation },
    /// Adds a script tag to the HTML page at `path`.
    Inject { path: String, script: String },
    /// Keeps the first ClientHello and the first sealed request for replay.
    RequestReplay,
    /// Answers the second sealed request with the first sealed response.
    ResponseReplay,
    /// Collects cookies that travel in the clear.
    CookieStealReplay,
    /// Answers handshakes itself with `attacker` and relays sealed traffic
    /// through its own session with the proxy. With `resign_objects` it also
    /// signs every executable object with `attacker`.
    KeySubstitute { attacker: Arc<SigningKeyPair>, resign_objects: bool },
}

impl AdversaryMode {
    pub fn name(&self) -> &'static str {
        match self {
            AdversaryMode::Honest => "honest",
            AdversaryMode::PassiveLog => "passive_log",
            AdversaryMode::Tamper { .. } => "tamper",
            AdversaryMode::Inject { .. } => "inject",
            AdversaryMode::RequestReplay => "request_replay",
            AdversaryMode::ResponseReplay => "response_replay",
            AdversaryMode::CookieStealReplay => "cookie_steal_replay",
            AdversaryMode::KeySubstitute { .. } => "key_substitute",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CdnOptions {
    /// Base URL of the proxy, e.g. `http://127.0.0.1:8443`.
    pub upstream: String,
    pub handshake_path: String,
    /// The site's real key, as any party can learn it from DNS.
    pub upstream_key: PublicKey,
    pub mode: AdversaryMode,
}

#[derive(Debug, Clone, Default)]
struct Captured {
    path: String,
    headers: HeaderMap,
    body: Bytes,
}

#[derive(Debug, Default)]
struct AdversaryState {
    armed: bool,
    applied: u64,
    hello: Option<(Captured, Option<SessionId>)>,
    request: Option<Captured>,
    response: Option<Bytes>,
    sealed_responses: u64,
    cookies: Vec<String>,
    /// KeySubstitute: victim session id → upstream session.
    relays: HashMap<SessionId, Arc<SessionState>>,
}

/// What a single hostile action achieved.
#[derive(Debug, Clone, Default, Serialize)]
pub struct AttackOutcome {
    pub action: String,
    pub status: Option<u16>,
    pub detail: String,
}

struct Forwarded {
    status: StatusCode,
    headers: HeaderMap,
    body: Bytes,
}

#[derive(Debug)]
pub struct Cdn {
    options: Mutex<CdnOptions>,
    client: HttpClient,
    cache: CdnCache,
    transcript: Transcript,
    clock: SharedClock,
    rng: SharedRng,
    state: Mutex<AdversaryState>,
    attacker_store: SessionStore,
}

fn is_sealed(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .is_some_and(|v| v.as_bytes().eq_ignore_ascii_case(wire::CONTENT_TYPE.as_bytes()))
}

fn bytes_response(status: StatusCode, headers: &HeaderMap, body: Bytes) -> Response<Body> {
    let mut resp = Response::new(net::full(body));
    *resp.status_mut() = status;
    *resp.headers_mut() = headers.clone();
    resp.headers_mut().remove(header::CONTENT_LENGTH);
    resp
}

impl Cdn {
    pub fn new(options: CdnOptions, clock: SharedClock, rng: SharedRng) -> Self {
        let armed = matches!(options.mode, AdversaryMode::Tamper { .. });
        Cdn {
            options: Mutex::new(options),
            client: net::http_client(),
            cache: CdnCache::new(clock.clone()),
            transcript: Transcript::default(),
            clock,
            rng,
            state: Mutex::new(AdversaryState { armed, ..Default::default() }),
            attacker_store: SessionStore::new(4096),
        }
    }

    fn options(&self) -> CdnOptions {
        self.options.lock().expect("options lock").clone()
    }

    pub fn mode(&self) -> AdversaryMode {
        self.options.lock().expect("options lock").mode.clone()
    }

    /// Switches mode and clears captured material. Tamper modes are armed.
    pub fn set_mode(&self, mode: AdversaryMode) {
        let armed = matches!(mode, AdversaryMode::Tamper { .. });
        self.options.lock().expect("options lock").mode = mode;
        let mut st = self.state.lock().expect("adversary lock");
        *st = AdversaryState { armed, applied: st.applied, ..Default::default() };
    }

    /// How many messages the tamper mode has altered so far.
    pub fn mutations_applied(&self) -> u64 {
        self.state.lock().expect("adversary lock").applied
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn cache(&self) -> &CdnCache {
        &self.cache
    }

    pub fn stolen_cookies(&self) -> Vec<String> {
        self.state.lock().expect("adversary lock").cookies.clone()
    }

    async fn forward(&self, method: &Method, target: &str, headers: &HeaderMap, body: Bytes) -> Result<Forwarded, String> {
        let upstream = self.options().upstream;
        self.transcript.record(Hop::CdnToUpstream, method.as_str(), target, None, headers, &body);
        let mut req = Request::builder()
            .method(method.clone())
            .uri(format!("{upstream}{target}"))
            .body(net::full(body))
            .map_err(|e| e.to_string())?;
        *req.headers_mut() = headers.clone();
        net::strip_hop_by_hop(req.headers_mut());
        req.headers_mut().remove(header::CONTENT_LENGTH);
        let resp = self.client.request(req).await.map_err(|e| e.to_string())?;
        let (parts, body) = resp.into_parts();
        let body = net::collect(body).await.map_err(|e| e.to_string())?;
        let mut headers = parts.headers;
        net::strip_hop_by_hop(&mut headers);
        self.transcript
            .record(Hop::UpstreamToCdn, method.as_str(), target, Some(parts.status.as_u16()), &headers, &body);
        Ok(Forwarded { status: parts.status, headers, body })
    }

    fn take_tamper(&self, target: &TamperTarget) -> Option<Mutation> {
        let AdversaryMode::Tamper { target: t, mutation } = self.mode() else {
            return None;
        };
        let mut st = self.state.lock().expect("adversary lock");
        if t != *target || !st.armed {
            return None;
        }
        st.armed = false;
        st.applied += 1;
        Some(mutation)
    }

    /// Runs one exchange as the client would, recording both hops.
    async fn relay(&self, req: Request<Incoming>) -> Result<Response<Body>, String> {
        let (parts, body) = req.into_parts();
        let body = net::collect(body).await.map_err(|e| e.to_string())?;
        let target = parts.uri.path_and_query().map_or("/", |pq| pq.as_str()).to_string();
        let path = parts.uri.path().to_string();
        let method = parts.method.clone();
        self.transcript.record(Hop::ClientToCdn, method.as_str(), &target, None, &parts.headers, &body);

        let opts = self.options();
        let sealed = is_sealed(&parts.headers);
        let is_hello = path == opts.handshake_path;
        let mode = opts.mode.clone();

        if let AdversaryMode::KeySubstitute { attacker, resign_objects } = &mode {
            if is_hello {
                return Ok(self.fake_server_hello(attacker, &body));
            }
            if sealed && method == Method::POST {
                return self.mitm(&target, &parts.headers, &body).await;
            }
            if *resign_objects && method == Method::GET {
                if let Some(object) = path.strip_suffix(&format!(".{}", integrity::SIDECAR_EXT)) {
                    return self.resign(attacker, object, &parts.headers).await;
                }
            }
        }

        let mut out_body = body.clone();
        match &mode {
            AdversaryMode::Tamper { .. } if sealed && !is_hello => {
                if let Some(m) = self.take_tamper(&TamperTarget::Request) {
                    out_body = Bytes::from(m.apply(&body));
                }
            }
            AdversaryMode::RequestReplay => {
                let mut st = self.state.lock().expect("adversary lock");
                let captured = Captured { path: path.clone(), headers: parts.headers.clone(), body: body.clone() };
                if is_hello && st.hello.is_none() {
                    st.hello = Some((captured, None));
                } else if sealed && !is_hello && st.request.is_none() {
                    st.request = Some(captured);
                }
            }
            AdversaryMode::CookieStealReplay if !sealed => {
                let mut st = self.state.lock().expect("adversary lock");
                for v in parts.headers.get_all(header::COOKIE) {
                    if let Ok(v) = v.to_str() {
                        st.cookies.push(v.to_string());
                    }
                }
            }
            _ => {}
        }

        let cache_key = (method == Method::GET && !sealed).then(|| target.clone());
        if let Some(key) = &cache_key {
            if let Some(hit) = self.cache.get(key) {
                let mut headers = HeaderMap::new();
                for (n, v) in &hit.headers {
                    if let (Ok(n), Ok(v)) = (header::HeaderName::from_bytes(n.as_bytes()), header::HeaderValue::from_bytes(v)) {
                        headers.append(n, v);
                    }
                }
                let status = StatusCode::from_u16(hit.status).unwrap_or(StatusCode::OK);
                let body = self.post_process(&mode, &path, is_hello, &headers, hit.body);
                self.transcript.record(Hop::CdnToClient, method.as_str(), &target, Some(status.as_u16()), &headers, &body);
                return Ok(bytes_response(status, &headers, body));
            }
        }

        let fwd = self.forward(&method, &target, &parts.headers, out_body).await?;
        if let Some(key) = &cache_key {
            let headers = fwd
                .headers
                .iter()
                .map(|(n, v)| (n.as_str().to_string(), v.as_bytes().to_vec()))
                .collect();
            self.cache.put(key, fwd.status.as_u16(), headers, fwd.body.clone());
        }
        if let AdversaryMode::RequestReplay = mode {
            if is_hello && fwd.status == StatusCode::OK {
                let mut st = self.state.lock().expect("adversary lock");
                if let Some((_, sid @ None)) = &mut st.hello {
                    *sid = ServerHello::decode(&fwd.body).ok().map(|sh| sh.session_id);
                }
            }
        }
        let body = if fwd.status == StatusCode::OK {
            self.post_process(&mode, &path, is_hello, &fwd.headers, fwd.body)
        } else {
            fwd.body
        };
        self.transcript.record(Hop::CdnToClient, method.as_str(), &target, Some(fwd.status.as_u16()), &fwd.headers, &body);
        Ok(bytes_response(fwd.status, &fwd.headers, body))
    }

    /// Response-side adversary actions on a successful response body.
    fn post_process(&self, mode: &AdversaryMode, path: &str, is_hello: bool, headers: &HeaderMap, body: Bytes) -> Bytes {
        let sealed = is_sealed(headers);
        match mode {
            AdversaryMode::Tamper { target, .. } => {
                let wanted = match target {
                    TamperTarget::Response => sealed && !is_hello,
                    TamperTarget::Handshake => is_hello,
                    TamperTarget::Object(p) => p == path,
                    TamperTarget::Request => false,
                };
                if wanted {
                    if let Some(m) = self.take_tamper(target) {
                        return Bytes::from(m.apply(&body));
                    }
                }
                body
            }
            AdversaryMode::Inject { path: p, script } if p == path => {
                let html = String::from_utf8_lossy(&body);
                let tag = format!("<script>{script}</script>");
                let injected = match html.rfind("</body>") {
                    Some(i) => format!("{}{tag}{}", &html[..i], &html[i..]),
                    None => format!("{html}{tag}"),
                };
                Bytes::from(injected)
            }
            AdversaryMode::ResponseReplay if sealed && !is_hello => {
                let mut st = self.state.lock().expect("adversary lock");
                st.sealed_responses += 1;
                match (&st.response, st.sealed_responses) {
                    (None, _) => {
                        st.response = Some(body.clone());
                        body
                    }
                    (Some(old), 2) => old.clone(),
                    _ => body,
                }
            }
            _ => body,
        }
    }

    fn fake_server_hello(&self, attacker: &SigningKeyPair, body: &Bytes) -> Response<Body> {
        let mut rng = self.rng.clone();
        let reply = ClientHello::decode(body).ok().and_then(|hello| {
            session::server_respond(
                &hello,
                attacker,
                &ServerHandshakeConfig::default(),
                self.clock.now_secs(),
                &mut rng,
                &self.attacker_store,
            )
            .ok()
        });
        let (status, body) = match reply {
            Some(sh) => (StatusCode::OK, Bytes::from(sh.encode())),
            None => (StatusCode::BAD_REQUEST, Bytes::from_static(b"bad hello\n")),
        };
        let resp = net::response(status, wire::CONTENT_TYPE, body.clone());
        let path = self.options().handshake_path;
        self.transcript.record(Hop::CdnToClient, "POST", &path, Some(status.as_u16()), resp.headers(), &body);
        resp
    }

    /// Opens a victim's sealed request with the substituted session, relays
    /// it over an attacker-owned session and re-seals the answer.
    async fn mitm(&self, target: &str, headers: &HeaderMap, body: &Bytes) -> Result<Response<Body>, String> {
        let now = self.clock.now_secs();
        let env = Envelope::decode(body).map_err(|e| e.to_string())?;
        let victim = self.attacker_store.lookup(&env.session_id, now).map_err(|e| e.to_string())?;
        let opened = victim.open_request(now, env).map_err(|e| e.to_string())?;
        self.transcript.record(Hop::CdnDecrypted, "POST", target, None, &HeaderMap::new(), &opened.payload);

        let relay = self.relay_session(victim.session_id()).await?;
        let (seq, sealed) = relay.seal_request(now, &opened.payload).map_err(|e| e.to_string())?;
        let fwd = self.forward(&Method::POST, target, headers, Bytes::from(sealed)).await?;
        if fwd.status != StatusCode::OK {
            return Err(format!("upstream answered {}", fwd.status));
        }
        let env = Envelope::decode(&fwd.body).map_err(|e| e.to_string())?;
        let inner = relay.open_response_for(now, env, seq).map_err(|e| e.to_string())?;
        self.transcript.record(Hop::CdnDecrypted, "POST", target, Some(200), &HeaderMap::new(), &inner.payload);
        let resealed = Bytes::from(victim.seal_response(now, opened.seq, &inner.payload).map_err(|e| e.to_string())?);
        self.transcript.record(Hop::CdnToClient, "POST", target, Some(200), &fwd.headers, &resealed);
        Ok(bytes_response(StatusCode::OK, &fwd.headers, resealed))
    }

    async fn relay_session(&self, victim: &SessionId) -> Result<Arc<SessionState>, String> {
        if let Some(s) = self.state.lock().expect("adversary lock").relays.get(victim) {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(self.attacker_handshake().await?);
        self.state.lock().expect("adversary lock").relays.insert(*victim, Arc::clone(&s));
        Ok(s)
    }

    /// A handshake with the proxy as an ordinary client would run it.
    pub async fn attacker_handshake(&self) -> Result<SessionState, String> {
        let opts = self.options();
        let mut rng = self.rng.clone();
        let (hello, pending) = session::client_begin(&mut rng).map_err(|e| e.to_string())?;
        let headers = sealed_headers();
        let fwd = self
            .forward(&Method::POST, &opts.handshake_path, &headers, Bytes::from(hello.encode()))
            .await?;
        if fwd.status != StatusCode::OK {
            return Err(format!("handshake answered {}", fwd.status));
        }
        let sh = ServerHello::decode(&fwd.body).map_err(|e| e.to_string())?;
        session::client_complete(pending, &sh, &opts.upstream_key, self.clock.now_secs()).map_err(|e| e.to_string())
    }

    async fn resign(&self, attacker: &SigningKeyPair, object: &str, headers: &HeaderMap) -> Result<Response<Body>, String> {
        let fwd = self.forward(&Method::GET, object, headers, Bytes::new()).await?;
        let sig = integrity::sign_detached(object, &fwd.body, attacker).to_sidecar();
        let body = Bytes::from(sig);
        let resp = net::response(StatusCode::OK, "text/plain", body.clone());
        let target = format!("{object}.{}", integrity::SIDECAR_EXT);
        self.transcript.record(Hop::CdnToClient, "GET", &target, Some(200), resp.headers(), &body);
        Ok(resp)
    }

    /// Sends the captured sealed request upstream again.
    pub async fn replay_request(&self) -> Option<AttackOutcome> {
        let captured = self.state.lock().expect("adversary lock").request.clone()?;
        let fwd = self.forward(&Method::POST, &captured.path, &captured.headers, captured.body).await;
        Some(outcome("replay sealed request", fwd))
    }

    /// Sends the captured ClientHello again. Returns the outcome and whether
    /// the proxy handed out the same session id twice.
    pub async fn replay_hello(&self) -> Option<(AttackOutcome, bool)> {
        let (captured, first) = self.state.lock().expect("adversary lock").hello.clone()?;
        let fwd = self.forward(&Method::POST, &captured.path, &captured.headers, captured.body).await;
        let second = fwd.as_ref().ok().and_then(|f| ServerHello::decode(&f.body).ok()).map(|sh| sh.session_id);
        let same = first.is_some() && first == second;
        Some((outcome("replay client hello", fwd), same))
    }

    /// Tries each stolen cookie against `private_path`, first in the clear
    /// and then inside a session of the attacker's own.
    pub async fn steal_and_replay(&self, private_path: &str) -> Vec<AttackOutcome> {
        let cookies = self.stolen_cookies();
        let mut out = Vec::new();
        for cookie in cookies {
            let mut headers = HeaderMap::new();
            if let Ok(v) = header::HeaderValue::from_str(&cookie) {
                headers.insert(header::COOKIE, v);
            }
            let fwd = self.forward(&Method::GET, private_path, &headers, Bytes::new()).await;
            out.push(outcome("stolen cookie in the clear", fwd));

            let sealed = async {
                let session = self.attacker_handshake().await?;
                let inner = wire::InnerRequest {
                    method: "GET".into(),
                    target: private_path.to_string(),
                    headers: vec![("cookie".into(), cookie.clone().into_bytes())],
                    body: Bytes::new(),
                };
                let now = self.clock.now_secs();
                let (seq, env) = session.seal_request(now, &inner.encode()).map_err(|e| e.to_string())?;
                let path = private_path.split('?').next().unwrap_or(private_path);
                let fwd = self.forward(&Method::POST, path, &sealed_headers(), Bytes::from(env)).await?;
                if fwd.status != StatusCode::OK {
                    return Ok(AttackOutcome {
                        action: "stolen cookie in attacker session".into(),
                        status: Some(fwd.status.as_u16()),
                        detail: "proxy rejected the envelope".into(),
                    });
                }
                let env = Envelope::decode(&fwd.body).map_err(|e| e.to_string())?;
                let opened = session.open_response_for(now, env, seq).map_err(|e| e.to_string())?;
                let resp = wire::InnerResponse::decode(&opened.payload).map_err(|e| e.to_string())?;
                Ok::<_, String>(AttackOutcome {
                    action: "stolen cookie in attacker session".into(),
                    status: Some(resp.status),
                    detail: String::from_utf8_lossy(&resp.body).trim().to_string(),
                })
            }
            .await;
            out.push(sealed.unwrap_or_else(|e| AttackOutcome {
                action: "stolen cookie in attacker session".into(),
                status: None,
                detail: e,
            }));
        }
        out
    }
}

fn sealed_headers() -> HeaderMap {
    let mut h = HeaderMap::new();
    h.insert(header::CONTENT_TYPE, header::HeaderValue::from_static(wire::CONTENT_TYPE));
    h
}

fn outcome(action: &str, fwd: Result<Forwarded, String>) -> AttackOutcome {
    match fwd {
        Ok(f) => AttackOutcome {
            action: action.into(),
            status: Some(f.status.as_u16()),
            detail: match std::str::from_utf8(&f.body) {
                Ok(text) => text.trim().chars().take(200).collect(),
                Err(_) => format!("{} bytes of binary", f.body.len()),
            },
        },
        Err(e) => AttackOutcome { action: action.into(), status: None, detail: e },
    }
}

impl Handler for Cdn {
    async fn handle(&self, req: Request<Incoming>) -> Response<Body> {
        match self.relay(req).await {
            Ok(resp) => resp,
            Err(e) => {
                tracing::debug!(error = %e, "cdn relay failed");
                net::response(StatusCode::BAD_GATEWAY, "text/plain", "cdn: upstream error\n")
            }
        }
    }
}
