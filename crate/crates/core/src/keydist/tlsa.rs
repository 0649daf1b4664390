//! TLSA records carrying the proxy's signing key as a DANE-EE SPKI
//! (usage 3, selector 1, matching type 0).

use crate::crypto::{self, PublicKey};

use super::KeyDistError;

pub const USAGE_DANE_EE: u8 = 3;
pub const SELECTOR_SPKI: u8 = 1;
pub const MATCHING_FULL: u8 = 0;
pub const DEFAULT_TTL: u32 = 3600;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TlsaPayload {
    pub usage: u8,
    pub selector: u8,
    pub matching_type: u8,
    pub data: Vec<u8>,
}

impl TlsaPayload {
    pub fn dane_ee_spki(spki: &[u8]) -> Self {
        TlsaPayload {
            usage: USAGE_DANE_EE,
            selector: SELECTOR_SPKI,
            matching_type: MATCHING_FULL,
            data: spki.to_vec(),
        }
    }

    pub fn to_rdata(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(3 + self.data.len());
        out.extend_from_slice(&[self.usage, self.selector, self.matching_type]);
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_rdata(rdata: &[u8]) -> Result<Self, KeyDistError> {
        match rdata {
            [usage, selector, matching_type, data @ ..] if !data.is_empty() => Ok(TlsaPayload {
                usage: *usage,
                selector: *selector,
                matching_type: *matching_type,
                data: data.to_vec(),
            }),
            _ => Err(KeyDistError::MalformedDns("TLSA rdata too short".into())),
        }
    }

    /// The signing key, if this record has the expected parameters and
    /// its data is a parseable SPKI for a supported algorithm.
    pub fn public_key(&self) -> Option<PublicKey> {
        if (self.usage, self.selector, self.matching_type) != (USAGE_DANE_EE, SELECTOR_SPKI, MATCHING_FULL) {
            return None;
        }
        PublicKey::from_spki_der(&self.data).ok()
    }
}

/// Owner name for the key record of `domain`.
pub fn owner_name(domain: &str) -> String {
    format!("_443._tcp.{}.", domain.trim_end_matches('.'))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TlsaRecord {
    pub owner: String,
    pub ttl: u32,
    pub payload: TlsaPayload,
}

impl TlsaRecord {
    /// Zone-file line, e.g.
    /// `_443._tcp.example.com. 3600 IN TLSA 3 1 0 3059...`.
    pub fn presentation(&self) -> String {
        format!(
            "{} {} IN TLSA {} {} {} {}",
            self.owner,
            self.ttl,
            self.payload.usage,
            self.payload.selector,
            self.payload.matching_type,
            crypto::hex(&self.payload.data).to_ascii_uppercase()
        )
    }

    /// Parses a presentation line. The hex data may be split across
    /// whitespace; the class and TTL fields are optional in either order.
    pub fn parse_presentation(line: &str) -> Result<Self, KeyDistError> {
        let bad = |why: &str| KeyDistError::MalformedDns(format!("TLSA line: {why}"));
        let mut fields = line.split_whitespace().peekable();
        let owner = fields.next().ok_or_else(|| bad("empty"))?.to_string();
        let mut ttl = DEFAULT_TTL;
        loop {
            match fields.peek().copied() {
                Some(f) if f.eq_ignore_ascii_case("IN") => {
                    fields.next();
                }
                Some(f) if f.bytes().all(|b| b.is_ascii_digit()) => {
                    ttl = f.parse().map_err(|_| bad("ttl"))?;
                    fields.next();
                }
                _ => break,
            }
        }
        if !fields.next().is_some_and(|t| t.eq_ignore_ascii_case("TLSA")) {
            return Err(bad("missing TLSA type"));
        }
        let mut num = || -> Result<u8, KeyDistError> {
            fields.next().and_then(|f| f.parse().ok()).ok_or_else(|| bad("parameter"))
        };
        let (usage, selector, matching_type) = (num()?, num()?, num()?);
        let hex: String = fields.collect();
        let data = crypto::unhex(&hex).ok_or_else(|| bad("hex data"))?;
        if data.is_empty() {
            return Err(bad("empty data"));
        }
        Ok(TlsaRecord {
            owner,
            ttl,
            payload: TlsaPayload {
                usage,
                selector,
                matching_type,
                data,
            },
        })
    }
}

/// The record to publish for `domain` so that agents can find `key`.
pub fn emit_tlsa(key: &PublicKey, domain: &str) -> TlsaRecord {
    TlsaRecord {
        owner: owner_name(domain),
        ttl: DEFAULT_TTL,
        payload: TlsaPayload::dane_ee_spki(&key.to_spki_der()),
    }
}
