//! Site configuration, the JSON counterpart of a `configure.js`:
//!
//! ```json
//! {
//!   "sensitiveURLs": ["/transactions", {"regex": "^/profile"}],
//!   "handshakeURL": "/clientHello",
//!   "handshakeMode": "on_demand",
//!   "maskUserAgent": false,
//!   "keyDomain": "shop.example",
//!   "resolverURL": "https://resolver.example/dns-query",
//!   "requireAD": true
//! }
//! ```
//!
//! Plain strings match the normalized request path exactly; `regex`
//! entries are searched in it.

use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};
use regex::Regex;
use serde::Deserialize;

use crate::route::{normalize_path, Matcher};

const PATH_ESCAPE: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'<')
    .add(b'>')
    .add(b'?')
    .add(b'`')
    .add(b'{')
    .add(b'}');

/// The User-Agent sent when masking is on.
pub const MASKED_USER_AGENT: &str = "Mozilla/5.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HandshakeMode {
    #[default]
    OnDemand,
    Eager,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SiteConfigError {
    #[error("site config is not valid JSON: {0}")]
    Json(String),
    #[error("sensitiveURLs[{index}]: {message}")]
    Pattern { index: usize, message: String },
    #[error("handshakeURL must be a non-empty absolute path")]
    HandshakeUrl,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawMatcher {
    Exact(String),
    Regex { regex: String },
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "sensitiveURLs", default)]
    sensitive_urls: Vec<RawMatcher>,
    #[serde(rename = "handshakeURL")]
    handshake_url: String,
    #[serde(default)]
    handshake_mode: HandshakeMode,
    #[serde(default)]
    mask_user_agent: bool,
    key_domain: Option<String>,
    #[serde(rename = "resolverURL")]
    resolver_url: Option<String>,
    #[serde(rename = "requireAD", default)]
    require_ad: bool,
}

#[derive(Debug, Clone)]
pub struct SiteConfig {
    pub sensitive_urls: Vec<Matcher>,
    pub handshake_url: String,
    pub handshake_mode: HandshakeMode,
    pub mask_user_agent: bool,
    /// Domain whose TLSA record carries the key; defaults to the URL host.
    pub key_domain: Option<String>,
    pub resolver_url: Option<String>,
    pub require_ad: bool,
}

impl SiteConfig {
    pub fn load(bytes: &[u8]) -> Result<Self, SiteConfigError> {
        let raw: RawConfig = serde_json::from_slice(bytes).map_err(|e| SiteConfigError::Json(e.to_string()))?;
        if !raw.handshake_url.starts_with('/') {
            return Err(SiteConfigError::HandshakeUrl);
        }
        let sensitive_urls = raw
            .sensitive_urls
            .into_iter()
            .enumerate()
            .map(|(index, m)| match m {
                RawMatcher::Exact(path) => Ok(Matcher::Exact(path)),
                RawMatcher::Regex { regex } => Regex::new(&regex).map(Matcher::Regex).map_err(|e| {
                    SiteConfigError::Pattern {
                        index,
                        message: e.to_string(),
                    }
                }),
            })
            .collect::<Result<_, _>>()?;
        Ok(SiteConfig {
            sensitive_urls,
            handshake_url: raw.handshake_url,
            handshake_mode: raw.handshake_mode,
            mask_user_agent: raw.mask_user_agent,
            key_domain: raw.key_domain,
            resolver_url: raw.resolver_url,
            require_ad: raw.require_ad,
        })
    }

    /// Whether a request target (path plus optional query) is private.
    pub fn is_sensitive(&self, target: &str) -> bool {
        let path = normalize_path(target);
        self.sensitive_urls.iter().any(|m| m.matches(&path))
    }

    /// Path the envelope for a private `target` is posted to. Segments past
    /// the part the pattern matched (ids, slugs) stay inside the envelope;
    /// when the match is not itself a private absolute path, the whole
    /// normalized path is used.
    pub fn outer_path(&self, target: &str) -> String {
        let path = normalize_path(target);
        let outer = self
            .sensitive_urls
            .iter()
            .find_map(|m| m.matched_prefix(&path))
            .filter(|p| p.starts_with('/') && self.sensitive_urls.iter().any(|m| m.matches(p)))
            .unwrap_or(&path);
        utf8_percent_encode(outer, PATH_ESCAPE).to_string()
    }
}
