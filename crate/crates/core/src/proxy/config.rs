//! Flat `key value` configuration mirroring the nginx directive names:
//!
//! ```text
//! listen      127.0.0.1:8443
//! origin      http://127.0.0.1:9000
//! cloakhello  /clientHello
//! cloakenc    exact:/transactions
//! cloakenc    prefix:/profile
//! cloakenc    re:^/api/v[0-9]+/private
//! cloakstate  shared 10240 /cert/private.pem
//! cloakcookie token
//! session_ttl 604800
//! window      1024
//! ```
//!
//! `#` starts a comment and a trailing `;` is ignored.

use std::path::{Path, PathBuf};

use http::Uri;
use regex::Regex;

use crate::route::Matcher;
use crate::session::{DEFAULT_SESSION_TTL, DEFAULT_WINDOW};

/// Bytes of state accounted per stored session when sizing `cloakstate`.
pub const SESSION_FOOTPRINT: usize = 256;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ProxyConfig {
    pub listen: String,
    pub origin: Uri,
    pub handshake_path: String,
    pub private_routes: Vec<Matcher>,
    pub state_name: String,
    pub state_size_kib: usize,
    pub key_path: PathBuf,
    pub private_cookies: Vec<String>,
    pub session_ttl: u64,
    pub window: u64,
}

impl ProxyConfig {
    /// Number of sessions the state budget holds.
    pub fn state_capacity(&self) -> usize {
        (self.state_size_kib * 1024 / SESSION_FOOTPRINT).max(1)
    }

    pub fn is_private_cookie(&self, name: &str) -> bool {
        self.private_cookies.iter().any(|c| c == name)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        let mut config = Self::parse(&text)?;
        if config.key_path.is_relative() {
            if let Some(dir) = path.parent() {
                config.key_path = dir.join(&config.key_path);
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut listen = None;
        let mut origin = None;
        let mut handshake_path = None;
        let mut private_routes = Vec::new();
        let mut state = None;
        let mut private_cookies = Vec::new();
        let mut session_ttl = DEFAULT_SESSION_TTL;
        let mut window = DEFAULT_WINDOW;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| ConfigError { line, message };
            let content = strip_comment(raw).trim().trim_end_matches(';').trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once(char::is_whitespace)
                .map(|(k, v)| (k, v.trim()))
                .ok_or_else(|| err(format!("directive `{content}` has no value")))?;
            match key {
                "listen" => listen = Some(value.to_string()),
                "origin" => {
                    let uri: Uri = value.parse().map_err(|e| err(format!("origin: {e}")))?;
                    if uri.scheme().is_none() || uri.authority().is_none() {
                        return Err(err("origin must be an absolute http(s) URL".into()));
                    }
                    origin = Some(uri);
                }
                "cloakhello" => {
                    if !value.starts_with('/') {
                        return Err(err("cloakhello must be an absolute path".into()));
                    }
                    handshake_path = Some(value.to_string());
                }
                "cloakenc" => private_routes.push(parse_matcher(value).map_err(err)?),
                "cloakstate" => {
                    let fields: Vec<&str> = value.split_whitespace().collect();
                    let (name, size, key) = match fields.as_slice() {
                        [size, key] => ("default", *size, *key),
                        [name, size, key] => (*name, *size, *key),
                        _ => return Err(err("cloakstate takes [name] <size KiB> <key path>".into())),
                    };
                    let size: usize = size.parse().map_err(|_| err(format!("bad state size `{size}`")))?;
                    if size == 0 {
                        return Err(err("state size must be positive".into()));
                    }
                    state = Some((name.to_string(), size, PathBuf::from(key)));
                }
                "cloakcookie" => private_cookies.extend(value.split_whitespace().map(str::to_string)),
                "session_ttl" => {
                    session_ttl = value
                        .parse()
                        .ok()
                        .filter(|&t| t > 0)
                        .ok_or_else(|| err("session_ttl must be a positive number of seconds".into()))?
                }
                "window" => {
                    window = value
                        .parse()
                        .ok()
                        .filter(|&w| w > 0)
                        .ok_or_else(|| err("window must be positive".into()))?
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }

        let missing = |what: &str| ConfigError {
            line: 0,
            message: format!("missing `{what}`"),
        };
        let (state_name, state_size_kib, key_path) = state.ok_or_else(|| missing("cloakstate"))?;
        let config = ProxyConfig {
            listen: listen.unwrap_or_else(|| "127.0.0.1:8080".into()),
            origin: origin.ok_or_else(|| missing("origin"))?,
            handshake_path: handshake_path.unwrap_or_else(|| "/clientHello".into()),
            private_routes,
            state_name,
            state_size_kib,
            key_path,
            private_cookies,
            session_ttl,
            window,
        };
        if config.private_routes.iter().any(|m| m.matches(&config.handshake_path)) {
            return Err(ConfigError {
                line: 0,
                message: format!("handshake path {} also matches a cloakenc route", config.handshake_path),
            });
        }
        Ok(config)
    }
}

/// A `#` opens a comment at line start or after whitespace, so regexes
/// may still contain one.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    let cut = (0..bytes.len()).find(|&i| bytes[i] == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()));
    &line[..cut.unwrap_or(line.len())]
}

/// `exact:/p`, `prefix:/p` or `re:<pattern>`. A bare path is a prefix,
/// like an nginx `location`.
pub fn parse_matcher(value: &str) -> Result<Matcher, String> {
    if let Some(p) = value.strip_prefix("exact:") {
        Ok(Matcher::Exact(p.to_string()))
    } else if let Some(p) = value.strip_prefix("prefix:") {
        Ok(Matcher::Prefix(p.to_string()))
    } else if let Some(p) = value.strip_prefix("re:") {
        Regex::new(p).map(Matcher::Regex).map_err(|e| format!("bad regex: {e}"))
    } else if value.starts_with('/') {
        Ok(Matcher::Prefix(value.to_string()))
    } else {
        Err(format!("route `{value}` needs an exact:, prefix: or re: marker"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# Allocate 10MB of session state.
cloakstate shared 10240 /cert/private.pem;
cloakcookie token;
cloakhello /clientHello;
cloakenc exact:/transactions;
cloakenc prefix:/profile;
origin http://127.0.0.1:9000
listen 0.0.0.0:8080
";

    #[test]
    fn sample_parses() {
        let c = ProxyConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.handshake_path, "/clientHello");
        assert_eq!(
            c.private_routes,
            vec![Matcher::Exact("/transactions".into()), Matcher::Prefix("/profile".into())]
        );
        assert_eq!((c.state_name.as_str(), c.state_size_kib), ("shared", 10240));
        assert_eq!(c.state_capacity(), 40960);
        assert_eq!(c.key_path, PathBuf::from("/cert/private.pem"));
        assert!(c.is_private_cookie("token"));
        assert!(!c.is_private_cookie("theme"));
        assert_eq!(c.origin.authority().unwrap().as_str(), "127.0.0.1:9000");
        assert_eq!(c.session_ttl, DEFAULT_SESSION_TTL);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = SAMPLE.replace("cloakenc prefix:/profile;", "cloakenc re:(;");
        assert_eq!(ProxyConfig::parse(&bad).unwrap_err().line, 6);
        let bad = format!("{SAMPLE}frobnicate yes\n");
        assert_eq!(ProxyConfig::parse(&bad).unwrap_err().line, 9);
        let bad = SAMPLE.replace("cloakstate shared 10240", "cloakstate shared lots");
        assert_eq!(ProxyConfig::parse(&bad).unwrap_err().line, 2);
    }

    #[test]
    fn handshake_path_may_not_be_private() {
        let bad = format!("{SAMPLE}cloakenc prefix:/client\n");
        assert!(ProxyConfig::parse(&bad).unwrap_err().message.contains("handshake path"));
    }

    #[test]
    fn hash_inside_regex_survives() {
        let c = ProxyConfig::parse(&format!("{SAMPLE}cloakenc re:^/a#b  # trailing\n")).unwrap();
        assert!(c.private_routes[2].matches("/a#b"));
    }

    #[test]
    fn required_directives() {
        assert!(ProxyConfig::parse("origin http://o:1\n").is_err());
        assert!(ProxyConfig::parse("cloakstate 8 k.pem\n").is_err());
        let c = ProxyConfig::parse("origin http://o:1\ncloakstate 8 k.pem\n").unwrap();
        assert_eq!(c.state_name, "default");
        assert_eq!(c.state_capacity(), 32);
    }
}
