use std::sync::atomic::{AtomicU64, Ordering};

use bytes::Bytes;
use http::header::{self, HeaderValue};
use http::{Method, Request, Response, StatusCode};
use http_body_util::{BodyExt, Limited};
use hyper::body::Incoming;
use serde::Serialize;

use super::cookie;
use super::ProxyConfig;
use crate::clock::SharedClock;
use crate::crypto::SigningKeyPair;
use crate::net::{self, Body, Handler, HttpClient};
use crate::rng::SharedRng;
use crate::route::{classify, normalize_path, RouteClass};
use crate::session::{self, ServerHandshakeConfig, SessionState, SessionStore};
use crate::wire::{self, ClientHello, Envelope, InnerRequest, InnerResponse};

/// Largest inner payload accepted in a sealed request.
pub const MAX_SEALED_BODY: usize = 64 << 20;

/// Every envelope-level failure gets exactly this status and body.
pub const REJECT_BODY: &[u8] = b"invicloak: request rejected\n";
pub const UNKNOWN_SESSION_BODY: &[u8] = b"invicloak: unknown session\n";

#[derive(Debug, Default)]
pub struct ProxyStats {
    handshakes: AtomicU64,
    sealed: AtomicU64,
    rejected: AtomicU64,
    unknown_session: AtomicU64,
    public: AtomicU64,
    origin_errors: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StatsSnapshot {
    pub handshakes: u64,
    pub sealed: u64,
    pub rejected: u64,
    pub unknown_session: u64,
    pub public: u64,
    pub origin_errors: u64,
}

impl ProxyStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        StatsSnapshot {
            handshakes: get(&self.handshakes),
            sealed: get(&self.sealed),
            rejected: get(&self.rejected),
            unknown_session: get(&self.unknown_session),
            public: get(&self.public),
            origin_errors: get(&self.origin_errors),
        }
    }
}

fn bump(counter: &AtomicU64) {
    counter.fetch_add(1, Ordering::Relaxed);
}

#[derive(Debug)]
pub struct ProxyServer {
    config: ProxyConfig,
    origin_base: String,
    signing_key: SigningKeyPair,
    handshake: ServerHandshakeConfig,
    store: SessionStore,
    client: HttpClient,
    clock: SharedClock,
    rng: SharedRng,
    stats: ProxyStats,
}

impl ProxyServer {
    pub fn new(config: ProxyConfig, signing_key: SigningKeyPair, clock: SharedClock, rng: SharedRng) -> Self {
        let origin_base = format!(
            "{}://{}",
            config.origin.scheme_str().unwrap_or("http"),
            config.origin.authority().map(|a| a.as_str()).unwrap_or_default()
        );
        ProxyServer {
            handshake: ServerHandshakeConfig {
                session_ttl: config.session_ttl,
                window: config.window,
            },
            store: SessionStore::new(config.state_capacity()),
            origin_base,
            config,
            signing_key,
            client: net::http_client(),
            clock,
            rng,
            stats: ProxyStats::default(),
        }
    }

    /// Reads the private key named by `cloakstate`.
    pub fn from_config(config: ProxyConfig, clock: SharedClock, rng: SharedRng) -> Result<Self, String> {
        let bytes = std::fs::read(&config.key_path).map_err(|e| format!("{}: {e}", config.key_path.display()))?;
        let key = SigningKeyPair::from_pkcs8_bytes(&bytes)
            .map_err(|_| format!("{}: not a PKCS#8 signing key", config.key_path.display()))?;
        Ok(Self::new(config, key, clock, rng))
    }

    pub fn config(&self) -> &ProxyConfig {
        &self.config
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    fn reject(&self) -> Response<Body> {
        bump(&self.stats.rejected);
        net::response(StatusCode::BAD_REQUEST, "text/plain", REJECT_BODY)
    }

    fn unknown_session(&self) -> Response<Body> {
        bump(&self.stats.unknown_session);
        net::response(StatusCode::UNAUTHORIZED, "text/plain", UNKNOWN_SESSION_BODY)
    }

    fn sealed(envelope: Vec<u8>) -> Response<Body> {
        Response::builder()
            .status(StatusCode::OK)
            .header(header::CONTENT_TYPE, wire::CONTENT_TYPE)
            .header(header::CACHE_CONTROL, "no-store")
            .body(net::full(envelope))
            .expect("static response parts are valid")
    }

    async fn handle_handshake(&self, req: Request<Incoming>) -> Response<Body> {
        if req.method() != Method::POST {
            return net::response(StatusCode::METHOD_NOT_ALLOWED, "text/plain", "POST only\n");
        }
        let Ok(body) = Limited::new(req.into_body(), 4096).collect().await else {
            return net::response(StatusCode::BAD_REQUEST, "text/plain", REJECT_BODY);
        };
        let Ok(hello) = ClientHello::decode(&body.to_bytes()) else {
            return net::response(StatusCode::BAD_REQUEST, "text/plain", REJECT_BODY);
        };
        let now = self.clock.now_secs();
        let mut rng = self.rng.clone();
        match session::server_respond(&hello, &self.signing_key, &self.handshake, now, &mut rng, &self.store) {
            Ok(server_hello) => {
                bump(&self.stats.handshakes);
                Self::sealed(server_hello.encode())
            }
            Err(_) => net::response(StatusCode::BAD_REQUEST, "text/plain", REJECT_BODY),
        }
    }

    async fn handle_private(&self, req: Request<Incoming>) -> Response<Body> {
        if req.method() != Method::POST {
            return self.reject();
        }
        let outer_host = req.headers().get(header::HOST).cloned();
        let limit = MAX_SEALED_BODY + wire::MIN_ENVELOPE_LEN + 4096;
        let Ok(body) = Limited::new(req.into_body(), limit).collect().await else {
            return self.reject();
        };
        let Ok(envelope) = Envelope::decode_bytes(body.to_bytes()) else {
            return self.reject();
        };
        let now = self.clock.now_secs();
        let Ok(state) = self.store.lookup(&envelope.session_id, now) else {
            return self.unknown_session();
        };
        let Ok(opened) = state.open_request(now, envelope) else {
            return self.reject();
        };
        let Ok(inner) = InnerRequest::decode(&opened.payload) else {
            return self.reject();
        };
        let inner_path = normalize_path(&inner.target);
        if classify(&inner_path, &self.config.handshake_path, &self.config.private_routes) != RouteClass::Private {
            return self.reject();
        }
        let Some(origin_req) = self.origin_request(&state, inner, outer_host) else {
            return self.reject();
        };
        let sealed = match self.client.request(origin_req).await {
            Ok(resp) => self.seal_origin_response(&state, now, opened.seq, resp).await,
            Err(err) => {
                tracing::warn!(%err, "origin unreachable");
                None
            }
        };
        let sealed = match sealed {
            Some(s) => s,
            None => {
                bump(&self.stats.origin_errors);
                let bad_gateway = InnerResponse {
                    status: 502,
                    headers: Vec::new(),
                    body: Bytes::new(),
                };
                match state.seal_response(now, opened.seq, &bad_gateway.encode()) {
                    Ok(s) => s,
                    Err(_) => return self.reject(),
                }
            }
        };
        bump(&self.stats.sealed);
        Self::sealed(sealed)
    }

    /// The plaintext request the origin would have seen without the proxy.
    fn origin_request(
        &self,
        state: &SessionState,
        inner: InnerRequest,
        outer_host: Option<HeaderValue>,
    ) -> Option<Request<Body>> {
        let method = Method::from_bytes(inner.method.as_bytes()).ok()?;
        let uri = format!("{}{}", self.origin_base, inner.target);
        let mut builder = Request::builder().method(method).uri(uri);
        let headers = builder.headers_mut()?;
        for (name, value) in &inner.headers {
            let lower = name.to_ascii_lowercase();
            if net::HOP_BY_HOP.contains(&lower.as_str()) || lower == "content-length" {
                continue;
            }
            let value = if lower == "cookie" {
                let text = std::str::from_utf8(value).ok()?;
                match cookie::open_cookie_header(state, text, |n| self.config.is_private_cookie(n)) {
                    Some(v) => v.into_bytes(),
                    None => continue,
                }
            } else {
                value.clone()
            };
            headers.append(
                header::HeaderName::from_bytes(lower.as_bytes()).ok()?,
                HeaderValue::from_bytes(&value).ok()?,
            );
        }
        if !headers.contains_key(header::HOST) {
            if let Some(host) = outer_host {
                headers.insert(header::HOST, host);
            }
        }
        if !inner.body.is_empty() || matches!(inner.method.as_str(), "POST" | "PUT" | "PATCH") {
            headers.insert(header::CONTENT_LENGTH, HeaderValue::from(inner.body.len()));
        }
        builder.body(net::full(inner.body)).ok()
    }

    async fn seal_origin_response(
        &self,
        state: &SessionState,
        now: u64,
        seq: u64,
        resp: Response<Incoming>,
    ) -> Option<Vec<u8>> {
        let (mut parts, mut body) = resp.into_parts();
        let hint = parts
            .headers
            .get(header::CONTENT_LENGTH)
            .and_then(|v| v.to_str().ok()?.parse::<usize>().ok())
            .unwrap_or(0)
            .min(MAX_SEALED_BODY);
        net::strip_hop_by_hop(&mut parts.headers);
        parts.headers.remove(header::CONTENT_LENGTH);
        let mut rng = self.rng.clone();
        let mut headers = Vec::with_capacity(parts.headers.len());
        for (name, value) in &parts.headers {
            let value = if name == header::SET_COOKIE {
                let text = value.to_str().ok()?;
                match cookie::seal_set_cookie(state, text, |n| self.config.is_private_cookie(n), &mut rng) {
                    Ok(v) => v.into_bytes(),
                    Err(err) => {
                        tracing::warn!(%err, "dropping Set-Cookie");
                        continue;
                    }
                }
            } else {
                value.as_bytes().to_vec()
            };
            headers.push((name.as_str().to_string(), value));
        }

        // copy each chunk into the seal buffer while it is still warm
        let mut buf = session::response_buffer(256 + hint);
        InnerResponse::encode_head(parts.status.as_u16(), &headers, &mut buf);
        let body_start = buf.len();
        while let Some(frame) = body.frame().await {
            let frame = frame.ok()?;
            if let Ok(data) = frame.into_data() {
                if buf.len() - body_start + data.len() > MAX_SEALED_BODY {
                    return None;
                }
                buf.extend_from_slice(&data);
            }
        }
        state.seal_response_buffer(now, seq, buf).ok()
    }

    async fn handle_public(&self, req: Request<Incoming>) -> Response<Body> {
        bump(&self.stats.public);
        let (mut parts, body) = req.into_parts();
        let target = parts.uri.path_and_query().map_or("/", |pq| pq.as_str());
        let Ok(uri) = format!("{}{}", self.origin_base, target).parse() else {
            return net::response(StatusCode::BAD_REQUEST, "text/plain", "bad request target\n");
        };
        parts.uri = uri;
        net::strip_hop_by_hop(&mut parts.headers);
        let upstream = Request::from_parts(parts, net::incoming(body));
        match self.client.request(upstream).await {
            Ok(resp) => {
                let (mut parts, body) = resp.into_parts();
                net::strip_hop_by_hop(&mut parts.headers);
                Response::from_parts(parts, net::incoming(body))
            }
            Err(err) => {
                tracing::warn!(%err, "origin unreachable");
                bump(&self.stats.origin_errors);
                net::response(StatusCode::BAD_GATEWAY, "text/plain", "bad gateway\n")
            }
        }
    }
}

impl Handler for ProxyServer {
    async fn handle(&self, req: Request<Incoming>) -> Response<Body> {
        let target = req.uri().path_and_query().map_or("/", |pq| pq.as_str());
        let path = normalize_path(target);
        match classify(&path, &self.config.handshake_path, &self.config.private_routes) {
            RouteClass::Handshake => self.handle_handshake(req).await,
            RouteClass::Private => self.handle_private(req).await,
            RouteClass::Public => self.handle_public(req).await,
        }
    }
}
