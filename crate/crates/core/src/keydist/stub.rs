//! A tiny authoritative-and-recursive-in-one DoH endpoint serving a fixed
//! zone. Used by tests, the scenario harness and `invicloak serve --stub`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::RwLock;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use bytes::Bytes;
use http::{header, Method, Request, Response, StatusCode};
use http_body_util::{BodyExt, Limited};
use hyper::body::Incoming;

use super::dns::{self, Message, Record};
use super::{KeyDistError, TlsaRecord, DNS_MESSAGE_TYPE};
use crate::net::{self, Body, Handler};

const MAX_QUERY_BYTES: usize = 4096;

#[derive(Clone, Debug, Default)]
pub struct StubZone {
    names: HashMap<String, Vec<Record>>,
}

impl StubZone {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, rtype: u16, ttl: u32, rdata: Vec<u8>) {
        let name = dns::canonical_name(name);
        self.names.entry(name.clone()).or_default().push(Record {
            name,
            rtype,
            class: dns::CLASS_IN,
            ttl,
            rdata,
        });
    }

    pub fn insert_tlsa(&mut self, record: &TlsaRecord) {
        self.insert(&record.owner, dns::TYPE_TLSA, record.ttl, record.payload.to_rdata());
    }

    /// Replaces every record at `name`.
    pub fn replace(&mut self, name: &str, records: Vec<(u16, u32, Vec<u8>)>) {
        self.names.remove(&dns::canonical_name(name));
        for (rtype, ttl, rdata) in records {
            self.insert(name, rtype, ttl, rdata);
        }
    }

    /// Zone text with one TLSA presentation line per non-empty,
    /// non-comment line.
    pub fn from_presentation(text: &str) -> Result<Self, KeyDistError> {
        let mut zone = StubZone::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with(';') || line.starts_with('#') {
                continue;
            }
            zone.insert_tlsa(&TlsaRecord::parse_presentation(line)?);
        }
        Ok(zone)
    }

    fn lookup(&self, name: &str) -> Option<&[Record]> {
        self.names.get(&dns::canonical_name(name)).map(Vec::as_slice)
    }
}

#[derive(Debug)]
pub struct StubResolver {
    zone: RwLock<StubZone>,
    authenticated: AtomicBool,
    queries: AtomicU64,
}

impl StubResolver {
    /// `authenticated` controls the AD bit on answers.
    pub fn new(zone: StubZone, authenticated: bool) -> Self {
        StubResolver {
            zone: RwLock::new(zone),
            authenticated: AtomicBool::new(authenticated),
            queries: AtomicU64::new(0),
        }
    }

    pub fn queries_answered(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn set_authenticated(&self, on: bool) {
        self.authenticated.store(on, Ordering::Relaxed);
    }

    pub fn update_zone(&self, f: impl FnOnce(&mut StubZone)) {
        f(&mut self.zone.write().expect("zone lock"));
    }

    /// Answers one wire-format query; `None` if it is not a decodable
    /// single-question query.
    pub fn answer(&self, query: &[u8]) -> Option<Vec<u8>> {
        let query = Message::decode(query).ok()?;
        if query.is_response() || query.questions.len() != 1 {
            return None;
        }
        self.queries.fetch_add(1, Ordering::Relaxed);
        let q = &query.questions[0];
        let mut resp = Message {
            id: query.id,
            flags: dns::FLAG_QR | dns::FLAG_RA | (query.flags & dns::FLAG_RD),
            questions: query.questions.clone(),
            ..Default::default()
        };
        if self.authenticated.load(Ordering::Relaxed) {
            resp.flags |= dns::FLAG_AD;
        }
        match self.zone.read().expect("zone lock").lookup(&q.name) {
            None => resp.set_rcode(dns::RCODE_NXDOMAIN),
            Some(records) => {
                resp.answers = records
                    .iter()
                    .filter(|r| r.rtype == q.qtype)
                    .map(|r| Record {
                        name: q.name.clone(),
                        ..r.clone()
                    })
                    .collect();
            }
        }
        if let Some(opt) = query.additional.iter().find(|r| r.rtype == dns::TYPE_OPT) {
            resp.additional.push(Record {
                name: String::new(),
                rtype: dns::TYPE_OPT,
                class: dns::EDNS_UDP_SIZE,
                ttl: opt.ttl & dns::EDNS_DO,
                rdata: Vec::new(),
            });
        }
        resp.encode().ok()
    }

    async fn query_bytes(req: Request<Incoming>) -> Result<Bytes, StatusCode> {
        match *req.method() {
            Method::GET => {
                let param = req
                    .uri()
                    .query()
                    .unwrap_or("")
                    .split('&')
                    .find_map(|kv| kv.strip_prefix("dns="))
                    .ok_or(StatusCode::BAD_REQUEST)?;
                URL_SAFE_NO_PAD
                    .decode(param.trim_end_matches('='))
                    .map(Bytes::from)
                    .map_err(|_| StatusCode::BAD_REQUEST)
            }
            Method::POST => {
                let ct = req.headers().get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok());
                if ct != Some(DNS_MESSAGE_TYPE) {
                    return Err(StatusCode::UNSUPPORTED_MEDIA_TYPE);
                }
                Limited::new(req.into_body(), MAX_QUERY_BYTES)
                    .collect()
                    .await
                    .map(|c| c.to_bytes())
                    .map_err(|_| StatusCode::BAD_REQUEST)
            }
            _ => Err(StatusCode::METHOD_NOT_ALLOWED),
        }
    }
}

impl Handler for StubResolver {
    async fn handle(&self, req: Request<Incoming>) -> Response<Body> {
        if req.uri().path() != "/dns-query" {
            return net::response(StatusCode::NOT_FOUND, "text/plain", "not found\n");
        }
        let result = match Self::query_bytes(req).await {
            Ok(q) => self.answer(&q).ok_or(StatusCode::BAD_REQUEST),
            Err(status) => Err(status),
        };
        match result {
            Ok(answer) => net::response(StatusCode::OK, DNS_MESSAGE_TYPE, answer),
            Err(status) => net::response(status, "text/plain", format!("{status}\n")),
        }
    }
}
