//! Request path normalization and private-route matching, shared by the
//! proxy (`cloakenc`) and the agent (`sensitiveURLs`).

use std::borrow::Cow;

use percent_encoding::percent_decode_str;
use regex::Regex;

/// Path of a request target: drops the query and fragment, percent-decodes
/// once and resolves dot segments. Always starts with '/'.
pub fn normalize_path(target: &str) -> String {
    let path = target.split(['?', '#']).next().unwrap_or("");
    let decoded: Cow<'_, str> = percent_decode_str(path).decode_utf8_lossy();
    if decoded.starts_with('/') {
        remove_dot_segments(&decoded)
    } else {
        remove_dot_segments(&format!("/{decoded}"))
    }
}

/// Dot-segment removal for an absolute path.
pub fn remove_dot_segments(path: &str) -> String {
    let mut out: Vec<&str> = Vec::new();
    let mut trailing_slash = false;
    for seg in path.split('/').skip(1) {
        match seg {
            "." => trailing_slash = true,
            ".." => {
                out.pop();
                trailing_slash = true;
            }
            _ => {
                out.push(seg);
                trailing_slash = false;
            }
        }
    }
    let mut result = String::with_capacity(path.len());
    for seg in &out {
        result.push('/');
        result.push_str(seg);
    }
    if trailing_slash || result.is_empty() {
        result.push('/');
    }
    result
}

#[derive(Debug, Clone)]
pub enum Matcher {
    Exact(String),
    Prefix(String),
    Regex(Regex),
}

impl Matcher {
    pub fn matches(&self, path: &str) -> bool {
        match self {
            Matcher::Exact(p) => path == p,
            Matcher::Prefix(p) => path.starts_with(p.as_str()),
            Matcher::Regex(re) => re.is_match(path),
        }
    }

    /// The leading part of `path` this matcher accounts for: the whole
    /// path for `Exact`, the prefix itself, or a regex match that starts
    /// at offset 0.
    pub fn matched_prefix<'a>(&'a self, path: &'a str) -> Option<&'a str> {
        match self {
            Matcher::Exact(p) => (path == p).then_some(path),
            Matcher::Prefix(p) => path.starts_with(p.as_str()).then_some(p.as_str()),
            Matcher::Regex(re) => re.find(path).filter(|m| m.start() == 0).map(|m| m.as_str()),
        }
    }
}

impl PartialEq for Matcher {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Matcher::Exact(a), Matcher::Exact(b)) | (Matcher::Prefix(a), Matcher::Prefix(b)) => a == b,
            (Matcher::Regex(a), Matcher::Regex(b)) => a.as_str() == b.as_str(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteClass {
    Handshake,
    Private,
    Public,
}

/// Classifies an already normalized path. The handshake path wins, then
/// the first matching private route.
pub fn classify(path: &str, handshake_path: &str, private: &[Matcher]) -> RouteClass {
    if path == handshake_path {
        RouteClass::Handshake
    } else if private.iter().any(|m| m.matches(path)) {
        RouteClass::Private
    } else {
        RouteClass::Public
    }
}
