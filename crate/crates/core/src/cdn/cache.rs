//! Shared-cache semantics reduced to what the harness needs: GET responses
//! with a positive `max-age`/`s-maxage` are stored until they go stale;
//! `no-store`, `no-cache` and `private` are never stored.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use bytes::Bytes;

use crate::clock::SharedClock;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub status: u16,
    pub headers: Vec<(String, Vec<u8>)>,
    pub body: Bytes,
    pub stored_at: u64,
    pub ttl: u64,
}

/// Freshness lifetime granted by a `Cache-Control` value, if any.
pub fn cacheable_ttl(cache_control: Option<&str>) -> Option<u64> {
    let cc = cache_control?;
    let mut max_age = None;
    let mut s_maxage = None;
    for directive in cc.split(',').map(|d| d.trim().to_ascii_lowercase()) {
        let (name, value) = directive.split_once('=').unwrap_or((&directive, ""));
        match name {
            "no-store" | "no-cache" | "private" => return None,
            "max-age" => max_age = value.trim_matches('"').parse::<u64>().ok(),
            "s-maxage" => s_maxage = value.trim_matches('"').parse::<u64>().ok(),
            _ => {}
        }
    }
    s_maxage.or(max_age).filter(|&t| t > 0)
}

#[derive(Debug)]
pub struct CdnCache {
    clock: SharedClock,
    entries: Mutex<HashMap<String, CacheEntry>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl CdnCache {
    pub fn new(clock: SharedClock) -> Self {
        CdnCache {
            clock,
            entries: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let now = self.clock.now_secs();
        let mut entries = self.entries.lock().expect("cache lock");
        let fresh = entries.get(key).filter(|e| now < e.stored_at.saturating_add(e.ttl)).cloned();
        if fresh.is_none() {
            entries.remove(key);
            self.misses.fetch_add(1, Ordering::Relaxed);
        } else {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        fresh
    }

    /// Stores the response if its headers allow it. Returns whether it did.
    pub fn put(&self, key: &str, status: u16, headers: Vec<(String, Vec<u8>)>, body: Bytes) -> bool {
        let cc = headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case("cache-control"))
            .and_then(|(_, v)| std::str::from_utf8(v).ok());
        let Some(ttl) = cacheable_ttl(cc) else {
            return false;
        };
        let entry = CacheEntry {
            status,
            headers,
            body,
            stored_at: self.clock.now_secs(),
            ttl,
        };
        self.entries.lock().expect("cache lock").insert(key.to_string(), entry);
        true
    }

    pub fn clear(&self) {
        self.entries.lock().expect("cache lock").clear();
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use std::sync::Arc;

    #[test]
    fn directives() {
        assert_eq!(cacheable_ttl(Some("public, max-age=300")), Some(300));
        assert_eq!(cacheable_ttl(Some("max-age=60, s-maxage=10")), Some(10));
        assert_eq!(cacheable_ttl(Some("public, max-age=300, no-store")), None);
        assert_eq!(cacheable_ttl(Some("private, max-age=300")), None);
        assert_eq!(cacheable_ttl(Some("max-age=0")), None);
        assert_eq!(cacheable_ttl(Some("public")), None);
        assert_eq!(cacheable_ttl(None), None);
    }

    #[test]
    fn freshness_and_opaque_bodies() {
        let clock = ManualClock::new(100);
        let cache = CdnCache::new(Arc::new(clock.clone()));
        let sealed = Bytes::from_static(&[1, 0, 0xde, 0xad, 0xbe, 0xef]);
        let headers = vec![
            ("content-type".to_string(), crate::wire::CONTENT_TYPE.as_bytes().to_vec()),
            ("cache-control".to_string(), b"public, max-age=5".to_vec()),
        ];
        assert!(cache.put("/private/cached", 200, headers, sealed.clone()));
        assert_eq!(cache.get("/private/cached").unwrap().body, sealed);
        clock.advance(5);
        assert!(cache.get("/private/cached").is_none());
        assert!(!cache.put("/x", 200, vec![("Cache-Control".into(), b"no-store".to_vec())], Bytes::new()));
        assert_eq!((cache.hits(), cache.misses()), (1, 1));
    }
}
