//! A small web site standing in for the origin: static assets (some of them
//! executable and signed), a login form, and two private pages. Secrets in
//! the site are unique 32-hex sentinels so leaks are a substring search.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use bytes::Bytes;
use http::{header, Method, Request, Response, StatusCode};
use hyper::body::Incoming;
use rand::RngCore;
use serde::Serialize;

use crate::crypto::{self, SigningKeyPair};
use crate::integrity::{self, ObjectClass};
use crate::net::{self, Body, Handler};

pub const USERNAME: &str = "alice";
pub const AUTH_COOKIE: &str = "token";
/// Largest body `/blob` and `/private/blob` serve.
pub const MAX_BLOB: usize = 8 << 20;

#[derive(Debug, Clone, Serialize)]
pub struct Sentinels {
    pub password: String,
    pub auth_token: String,
    pub profile: String,
    pub transactions: String,
    pub account: String,
}

impl Sentinels {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        let mut next = || {
            let mut b = [0u8; 16];
            rng.fill_bytes(&mut b);
            crypto::hex(&b)
        };
        Sentinels {
            password: next(),
            auth_token: next(),
            profile: next(),
            transactions: next(),
            account: next(),
        }
    }

    pub fn all(&self) -> [(&'static str, &str); 5] {
        [
            ("password", &self.password),
            ("auth_token", &self.auth_token),
            ("profile", &self.profile),
            ("transactions", &self.transactions),
            ("account", &self.account),
        ]
    }
}

const INDEX_HTML: &str = "<!doctype html>\n<html><head><title>Shop</title>\n\
<link rel=\"stylesheet\" href=\"/style.css\">\n<script src=\"/app.js\"></script></head>\n\
<body><img src=\"/logo.png\"><a href=\"/profile\">Profile</a></body></html>\n";
const APP_JS: &str = "(function(){\n  document.title = 'Shop';\n  window.shopReady = true;\n})();\n";
const STYLE_CSS: &str = "body { font-family: sans-serif; }\n";
const NEWS_HTML: &str = "<!doctype html>\n<html><body><h1>News</h1><p>Nothing happened.</p></body></html>\n";

/// The static part of the site: path → (content type, body).
pub fn site_assets() -> BTreeMap<String, (String, Bytes)> {
    let mut logo = vec![0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];
    logo.extend((0..120u8).map(|i| i.wrapping_mul(37)));
    [
        ("/index.html", "text/html; charset=utf-8", Bytes::from_static(INDEX_HTML.as_bytes())),
        ("/app.js", "text/javascript", Bytes::from_static(APP_JS.as_bytes())),
        ("/style.css", "text/css", Bytes::from_static(STYLE_CSS.as_bytes())),
        ("/news.html", "text/html; charset=utf-8", Bytes::from_static(NEWS_HTML.as_bytes())),
        ("/logo.png", "image/png", Bytes::from(logo)),
    ]
    .into_iter()
    .map(|(p, ct, body)| (p.to_string(), (ct.to_string(), body)))
    .collect()
}

#[derive(Debug)]
pub struct OriginFixture {
    assets: HashMap<String, (String, Bytes)>,
    sentinels: Sentinels,
    blob: Bytes,
    hits: Mutex<BTreeMap<String, u64>>,
    authenticated: AtomicU64,
    total: AtomicU64,
}

impl OriginFixture {
    /// Executable assets get `.icsig` sidecars signed with `site_key`.
    pub fn new(sentinels: Sentinels, site_key: &SigningKeyPair) -> Self {
        let mut assets: HashMap<String, (String, Bytes)> = HashMap::new();
        for (path, (ct, body)) in site_assets() {
            if integrity::classify_executable(Some(&ct), &path, false) == ObjectClass::Executable {
                let sig = integrity::sign_detached(&path, &body, site_key);
                assets.insert(format!("{path}.{}", integrity::SIDECAR_EXT), ("text/plain".into(), sig.to_sidecar().into()));
            }
            assets.insert(path, (ct, body));
        }
        let blob: Vec<u8> = (0..MAX_BLOB).map(|i| (i % 251) as u8).collect();
        OriginFixture {
            assets,
            sentinels,
            blob: Bytes::from(blob),
            hits: Mutex::new(BTreeMap::new()),
            authenticated: AtomicU64::new(0),
            total: AtomicU64::new(0),
        }
    }

    pub fn sentinels(&self) -> &Sentinels {
        &self.sentinels
    }

    /// Requests seen per path.
    pub fn hits(&self) -> BTreeMap<String, u64> {
        self.hits.lock().expect("hits lock").clone()
    }

    pub fn hits_for(&self, path: &str) -> u64 {
        self.hits.lock().expect("hits lock").get(path).copied().unwrap_or(0)
    }

    pub fn total_requests(&self) -> u64 {
        self.total.load(Ordering::Relaxed)
    }

    /// Private pages served to a logged-in user.
    pub fn authenticated_responses(&self) -> u64 {
        self.authenticated.load(Ordering::Relaxed)
    }

    fn logged_in(&self, req: &Request<Incoming>) -> bool {
        req.headers()
            .get_all(header::COOKIE)
            .iter()
            .filter_map(|v| v.to_str().ok())
            .flat_map(|v| v.split(';'))
            .filter_map(|pair| pair.trim().split_once('='))
            .any(|(n, v)| n == AUTH_COOKIE && v == self.sentinels.auth_token)
    }

    fn blob(&self, req: &Request<Incoming>) -> Response<Body> {
        let size = req
            .uri()
            .query()
            .unwrap_or("")
            .split('&')
            .find_map(|kv| kv.strip_prefix("size="))
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or(1024)
            .min(MAX_BLOB);
        Response::builder()
            .header(header::CONTENT_TYPE, "application/octet-stream")
            .header(header::CACHE_CONTROL, "no-store")
            .body(net::full(self.blob.slice(..size)))
            .expect("static response parts are valid")
    }
}

fn page(status: StatusCode, body: String) -> Response<Body> {
    Response::builder()
        .status(status)
        .header(header::CONTENT_TYPE, "text/html; charset=utf-8")
        .header(header::CACHE_CONTROL, "no-store")
        .body(net::full(body))
        .expect("static response parts are valid")
}

impl Handler for OriginFixture {
    async fn handle(&self, req: Request<Incoming>) -> Response<Body> {
        let path = req.uri().path().to_string();
        self.total.fetch_add(1, Ordering::Relaxed);
        *self.hits.lock().expect("hits lock").entry(path.clone()).or_default() += 1;

        if path == "/blob" || path == "/private/blob" {
            return self.blob(&req);
        }
        match (req.method().clone(), path.as_str()) {
            (Method::GET, p) if self.assets.contains_key(p) => {
                let (ct, body) = &self.assets[p];
                Response::builder()
                    .header(header::CONTENT_TYPE, ct.as_str())
                    .header(header::CACHE_CONTROL, "public, max-age=300")
                    .body(net::full(body.clone()))
                    .expect("static response parts are valid")
            }
            (Method::POST, "/login") => {
                let Ok(form) = net::collect(req.into_body()).await else {
                    return page(StatusCode::BAD_REQUEST, "bad form\n".into());
                };
                let form = String::from_utf8_lossy(&form);
                let field = |name: &str| {
                    form.split('&')
                        .find_map(|kv| kv.strip_prefix(name)?.strip_prefix('='))
                        .map(str::to_string)
                };
                if field("user").as_deref() == Some(USERNAME) && field("password").as_deref() == Some(&self.sentinels.password) {
                    Response::builder()
                        .header(header::CONTENT_TYPE, "text/plain")
                        .header(header::CACHE_CONTROL, "no-store")
                        .header(header::SET_COOKIE, format!("{AUTH_COOKIE}={}; Path=/; HttpOnly", self.sentinels.auth_token))
                        .header(header::SET_COOKIE, "theme=light; Path=/")
                        .body(net::full(format!("welcome {USERNAME}\n")))
                        .expect("static response parts are valid")
                } else {
                    page(StatusCode::FORBIDDEN, "wrong credentials\n".into())
                }
            }
            (Method::GET, p) if p == "/profile" || p.starts_with("/profile/") => {
                if !self.logged_in(&req) {
                    return page(StatusCode::UNAUTHORIZED, "login required\n".into());
                }
                self.authenticated.fetch_add(1, Ordering::Relaxed);
                page(StatusCode::OK, format!("<p>{USERNAME}: {}</p>\n", self.sentinels.profile))
            }
            (Method::GET, "/transactions") => {
                if !self.logged_in(&req) {
                    return page(StatusCode::UNAUTHORIZED, "login required\n".into());
                }
                self.authenticated.fetch_add(1, Ordering::Relaxed);
                let acct = req.uri().query().unwrap_or("").to_string();
                page(StatusCode::OK, format!("<p>{acct}: {}</p>\n", self.sentinels.transactions))
            }
            _ => page(StatusCode::NOT_FOUND, "not found\n".into()),
        }
    }
}
