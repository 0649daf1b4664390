//! Byte layouts for everything that crosses the CDN.
//!
//! All integers are big-endian, fixed-length fields come first, and every
//! decoder rejects trailing bytes so each value has exactly one encoding.
//! `docs/wire.md` carries the same layouts with hex dumps.
//!
//! ```text
//! ClientHello   = 0x01 | client_share[65]
//! ServerHello   = 0x01 | server_share[65] | session_id[32] | expire_t u64
//!                 | sig_alg u8 | sig_len u16 | signature[sig_len]
//! Envelope      = 0x01 | direction u8 | session_id[32] | nonce[12]
//!                 | AEAD(seq u64 | payload)
//! Transcript    = "invicloak v1 transcript" | client_share | server_share
//!                 | session_id | expire_t u64
//! ```

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use bytes::Bytes;
use thiserror::Error;

use crate::crypto::{self, SigAlg, NONCE_LEN, POINT_LEN, TAG_LEN};

pub const VERSION: u8 = 1;
/// Media type of every handshake and envelope body, in both directions.
pub const CONTENT_TYPE: &str = "application/x-invicloak";
pub const SESSION_ID_LEN: usize = 32;
pub const TRANSCRIPT_LABEL: &[u8] = b"invicloak v1 transcript";
pub const TRANSCRIPT_LEN: usize = TRANSCRIPT_LABEL.len() + 2 * POINT_LEN + SESSION_ID_LEN + 8;

pub const CLIENT_HELLO_LEN: usize = 1 + POINT_LEN;
/// version, direction, session id, nonce.
pub const ENVELOPE_HEADER_LEN: usize = 1 + 1 + SESSION_ID_LEN + NONCE_LEN;
/// Header plus the sealed 8-byte sequence number and tag.
pub const MIN_ENVELOPE_LEN: usize = ENVELOPE_HEADER_LEN + 8 + TAG_LEN;

pub const COOKIE_PREFIX: &str = "ic1.";
pub const MIN_COOKIE_BODY_LEN: usize = NONCE_LEN + TAG_LEN;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("malformed frame at offset {offset}: {reason}")]
    Malformed { offset: usize, reason: &'static str },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("length mismatch: expected {expected} bytes, found {actual}")]
    LengthMismatch { expected: usize, actual: usize },
}

fn malformed(offset: usize, reason: &'static str) -> WireError {
    WireError::Malformed { offset, reason }
}

/// Bounds-checked cursor. Every read states what it wanted so errors carry
/// the failing offset.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(malformed(self.pos, what));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], WireError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, WireError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.array(what)?))
    }

    fn rest(&mut self) -> &'a [u8] {
        let out = &self.buf[self.pos..];
        self.pos = self.buf.len();
        out
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn version(&mut self) -> Result<(), WireError> {
        match self.u8("version")? {
            VERSION => Ok(()),
            v => Err(WireError::UnsupportedVersion(v)),
        }
    }

    fn finish(&self) -> Result<(), WireError> {
        if self.pos != self.buf.len() {
            return Err(malformed(self.pos, "trailing bytes"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionId(pub [u8; SESSION_ID_LEN]);

impl SessionId {
    pub fn as_bytes(&self) -> &[u8; SESSION_ID_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        crypto::hex(&self.0)
    }
}

impl std::fmt::Debug for SessionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SessionId({})", &self.to_hex()[..16])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Direction {
    Request = 0,
    Response = 1,
}

impl Direction {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Request),
            1 => Some(Self::Response),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientHello {
    pub client_share: [u8; POINT_LEN],
}

impl ClientHello {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CLIENT_HELLO_LEN);
        out.push(VERSION);
        out.extend_from_slice(&self.client_share);
        out
    }

    /// Structural decode only; curve membership is checked by the handshake.
    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        r.version()?;
        if r.remaining() != POINT_LEN {
            return Err(WireError::LengthMismatch { expected: CLIENT_HELLO_LEN, actual: buf.len() });
        }
        let client_share = r.array("client share")?;
        r.finish()?;
        Ok(Self { client_share })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerHello {
    pub server_share: [u8; POINT_LEN],
    pub session_id: SessionId,
    pub expire_t: u64,
    pub sig_alg: SigAlg,
    pub signature: Vec<u8>,
}

impl ServerHello {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + POINT_LEN + SESSION_ID_LEN + 8 + 3 + self.signature.len());
        out.push(VERSION);
        out.extend_from_slice(&self.server_share);
        out.extend_from_slice(&self.session_id.0);
        out.extend_from_slice(&self.expire_t.to_be_bytes());
        out.push(self.sig_alg.as_byte());
        out.extend_from_slice(&(self.signature.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        r.version()?;
        let server_share = r.array("server share")?;
        let session_id = SessionId(r.array("session id")?);
        let expire_t = r.u64("expire_t")?;
        let alg_at = r.pos;
        let sig_alg = SigAlg::from_byte(r.u8("sig_alg")?).ok_or(malformed(alg_at, "unknown signature algorithm"))?;
        let sig_len = r.u16("signature length")? as usize;
        if sig_len != r.remaining() {
            return Err(WireError::LengthMismatch { expected: r.pos + sig_len, actual: buf.len() });
        }
        if sig_len != sig_alg.signature_len() {
            return Err(malformed(r.pos, "signature length does not match algorithm"));
        }
        let signature = r.take(sig_len, "signature")?.to_vec();
        r.finish()?;
        Ok(Self { server_share, session_id, expire_t, sig_alg, signature })
    }
}

/// The bytes the server signs and both sides hash into the key schedule.
pub fn transcript_bytes(
    hello: &ClientHello,
    server_share: &[u8; POINT_LEN],
    session_id: &SessionId,
    expire_t: u64,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(TRANSCRIPT_LEN);
    out.extend_from_slice(TRANSCRIPT_LABEL);
    out.extend_from_slice(&hello.client_share);
    out.extend_from_slice(server_share);
    out.extend_from_slice(&session_id.0);
    out.extend_from_slice(&expire_t.to_be_bytes());
    out
}

/// A parsed (still encrypted) envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub direction: Direction,
    pub session_id: SessionId,
    pub nonce: [u8; NONCE_LEN],
    /// AEAD(seq || payload) including the tag.
    pub ciphertext: Bytes,
}

impl Envelope {
    pub fn header(direction: Direction, session_id: &SessionId, nonce: &[u8; NONCE_LEN]) -> [u8; ENVELOPE_HEADER_LEN] {
        let mut h = [0u8; ENVELOPE_HEADER_LEN];
        h[0] = VERSION;
        h[1] = direction as u8;
        h[2..34].copy_from_slice(&session_id.0);
        h[34..].copy_from_slice(nonce);
        h
    }

    /// Additional authenticated data: version || direction || session id.
    pub fn aad(direction: Direction, session_id: &SessionId) -> [u8; 2 + SESSION_ID_LEN] {
        let mut a = [0u8; 2 + SESSION_ID_LEN];
        a[0] = VERSION;
        a[1] = direction as u8;
        a[2..].copy_from_slice(&session_id.0);
        a
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ENVELOPE_HEADER_LEN + self.ciphertext.len());
        out.extend_from_slice(&Self::header(self.direction, &self.session_id, &self.nonce));
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        Self::decode_bytes(Bytes::copy_from_slice(buf))
    }

    /// Zero-copy decode; the ciphertext shares `buf`'s storage.
    pub fn decode_bytes(buf: Bytes) -> Result<Self, WireError> {
        if buf.len() < MIN_ENVELOPE_LEN {
            return Err(malformed(buf.len(), "envelope shorter than minimum"));
        }
        let mut r = Reader::new(&buf);
        r.version()?;
        let direction = Direction::from_byte(r.u8("direction")?).ok_or(malformed(1, "unknown direction"))?;
        let session_id = SessionId(r.array("session id")?);
        let nonce = r.array("nonce")?;
        let start = r.pos;
        Ok(Self { direction, session_id, nonce, ciphertext: buf.slice(start..) })
    }

    /// Reads only the session id, for routing before full decode.
    pub fn peek_session_id(buf: &[u8]) -> Option<SessionId> {
        (buf.len() >= MIN_ENVELOPE_LEN && buf[0] == VERSION).then(|| SessionId(buf[2..34].try_into().unwrap()))
    }
}

/// `ic1.` followed by base64url (no padding) of nonce || ciphertext+tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherCookieValue {
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
}

impl CipherCookieValue {
    pub fn encode(&self) -> String {
        let mut raw = Vec::with_capacity(NONCE_LEN + self.ciphertext.len());
        raw.extend_from_slice(&self.nonce);
        raw.extend_from_slice(&self.ciphertext);
        format!("{COOKIE_PREFIX}{}", URL_SAFE_NO_PAD.encode(raw))
    }

    pub fn decode(value: &str) -> Result<Self, WireError> {
        let body = value
            .strip_prefix(COOKIE_PREFIX)
            .ok_or(malformed(0, "missing cookie prefix"))?;
        let raw = URL_SAFE_NO_PAD
            .decode(body)
            .map_err(|_| malformed(COOKIE_PREFIX.len(), "cookie body is not base64url"))?;
        if raw.len() < MIN_COOKIE_BODY_LEN {
            return Err(WireError::LengthMismatch { expected: MIN_COOKIE_BODY_LEN, actual: raw.len() });
        }
        Ok(Self {
            nonce: raw[..NONCE_LEN].try_into().unwrap(),
            ciphertext: raw[NONCE_LEN..].to_vec(),
        })
    }
}

/// A detached object signature. The signed message is
/// SHA-384(object) || canonical URL path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetachedSignature {
    pub sig_alg: SigAlg,
    pub signature: Vec<u8>,
}

impl DetachedSignature {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + self.signature.len());
        out.push(self.sig_alg.as_byte());
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        let sig_alg = SigAlg::from_byte(r.u8("sig_alg")?).ok_or(malformed(0, "unknown signature algorithm"))?;
        let want = sig_alg.signature_len();
        if r.remaining() != want {
            return Err(WireError::LengthMismatch { expected: 1 + want, actual: buf.len() });
        }
        let signature = r.rest().to_vec();
        Ok(Self { sig_alg, signature })
    }

    /// Hex text used both in `.icsig` sidecars (with a trailing newline) and
    /// the `X-InviCloak-Sig` header (without).
    pub fn to_hex(&self) -> String {
        crypto::hex(&self.to_bytes())
    }

    pub fn to_sidecar(&self) -> String {
        format!("{}\n", self.to_hex())
    }

    pub fn from_hex(text: &str) -> Result<Self, WireError> {
        let raw = crypto::unhex(text).ok_or(malformed(0, "signature is not hex"))?;
        Self::from_bytes(&raw)
    }
}

/// A CDN-visible object bundled with its signature:
/// `0x01 | sig_alg | sig_len u16 | signature | object bytes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedObjectEnvelope {
    pub object_bytes: Vec<u8>,
    pub signature: DetachedSignature,
}

impl SignedObjectEnvelope {
    pub fn encode(&self) -> Vec<u8> {
        let sig = &self.signature.signature;
        let mut out = Vec::with_capacity(4 + sig.len() + self.object_bytes.len());
        out.push(VERSION);
        out.push(self.signature.sig_alg.as_byte());
        out.extend_from_slice(&(sig.len() as u16).to_be_bytes());
        out.extend_from_slice(sig);
        out.extend_from_slice(&self.object_bytes);
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        r.version()?;
        let sig_alg = SigAlg::from_byte(r.u8("sig_alg")?).ok_or(malformed(1, "unknown signature algorithm"))?;
        let sig_len = r.u16("signature length")? as usize;
        if sig_len != sig_alg.signature_len() {
            return Err(malformed(2, "signature length does not match algorithm"));
        }
        let signature = r.take(sig_len, "signature")?.to_vec();
        let object_bytes = r.rest().to_vec();
        Ok(Self { object_bytes, signature: DetachedSignature { sig_alg, signature } })
    }
}

/// Message covered by an object signature.
pub fn object_signing_message(path: &str, content: &[u8]) -> Vec<u8> {
    let mut msg = Vec::with_capacity(48 + path.len());
    msg.extend_from_slice(&crypto::sha384(content));
    msg.extend_from_slice(path.as_bytes());
    msg
}

/// HTTP header list as carried inside inner frames.
pub type HeaderList = Vec<(String, Vec<u8>)>;

/// The plaintext HTTP request sealed inside a request envelope:
///
/// ```text
/// method_len u8 | method | target_len u16 | target | header_count u16
/// | (name_len u16 | name | value_len u16 | value)* | body
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InnerRequest {
    pub method: String,
    /// Path plus optional query, starting with '/'.
    pub target: String,
    pub headers: HeaderList,
    pub body: Bytes,
}

/// The plaintext HTTP response sealed inside a response envelope:
/// `status u16 | header_count u16 | headers | body`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InnerResponse {
    pub status: u16,
    pub headers: HeaderList,
    pub body: Bytes,
}

fn is_token(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b"!#$%&'*+-.^_`|~".contains(&b))
}

/// Header fields whose name or value exceeds 65535 bytes cannot be framed
/// and are left out, as are any beyond the 65535th.
fn put_headers(out: &mut Vec<u8>, headers: &[(String, Vec<u8>)]) {
    let max = usize::from(u16::MAX);
    let fitting: Vec<_> = headers
        .iter()
        .filter(|(n, v)| n.len() <= max && v.len() <= max)
        .take(max)
        .collect();
    out.extend_from_slice(&(fitting.len() as u16).to_be_bytes());
    for (name, value) in fitting {
        out.extend_from_slice(&(name.len() as u16).to_be_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(value.len() as u16).to_be_bytes());
        out.extend_from_slice(value);
    }
}

fn read_headers(r: &mut Reader<'_>) -> Result<HeaderList, WireError> {
    let count = r.u16("header count")? as usize;
    let mut headers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let at = r.pos;
        let len = r.u16("header name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "header name")?)
            .ok()
            .filter(|n| is_token(n))
            .ok_or(malformed(at, "invalid header name"))?
            .to_owned();
        let at = r.pos;
        let len = r.u16("header value length")? as usize;
        let value = r.take(len, "header value")?;
        if value.iter().any(|&b| b == b'\r' || b == b'\n' || b == 0) {
            return Err(malformed(at, "invalid header value"));
        }
        headers.push((name, value.to_vec()));
    }
    Ok(headers)
}

impl InnerRequest {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.target.len() + self.body.len());
        self.encode_into(&mut out);
        out
    }

    /// The method must fit in 255 bytes and the target in 65535.
    pub fn is_encodable(&self) -> bool {
        self.method.len() <= usize::from(u8::MAX) && self.target.len() <= usize::from(u16::MAX)
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        debug_assert!(self.is_encodable());
        out.push(self.method.len() as u8);
        out.extend_from_slice(self.method.as_bytes());
        out.extend_from_slice(&(self.target.len() as u16).to_be_bytes());
        out.extend_from_slice(self.target.as_bytes());
        put_headers(out, &self.headers);
        out.extend_from_slice(&self.body);
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        let len = r.u8("method length")? as usize;
        let method = std::str::from_utf8(r.take(len, "method")?)
            .ok()
            .filter(|m| is_token(m))
            .ok_or(malformed(1, "invalid method"))?
            .to_owned();
        let at = r.pos;
        let len = r.u16("target length")? as usize;
        let target = std::str::from_utf8(r.take(len, "target")?)
            .ok()
            .filter(|t| t.starts_with('/') && t.bytes().all(|b| b.is_ascii_graphic()))
            .ok_or(malformed(at, "invalid request target"))?
            .to_owned();
        let headers = read_headers(&mut r)?;
        let body = Bytes::copy_from_slice(r.rest());
        Ok(Self { method, target, headers, body })
    }
}

impl InnerResponse {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.body.len());
        Self::encode_head(self.status, &self.headers, &mut out);
        out.extend_from_slice(&self.body);
        out
    }

    /// Writes everything but the body, which the caller appends.
    pub fn encode_head(status: u16, headers: &[(String, Vec<u8>)], out: &mut Vec<u8>) {
        out.extend_from_slice(&status.to_be_bytes());
        put_headers(out, headers);
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        Self::decode_bytes(Bytes::copy_from_slice(buf))
    }

    pub fn decode_bytes(buf: Bytes) -> Result<Self, WireError> {
        let mut r = Reader::new(&buf);
        let status = r.u16("status")?;
        if !(100..=999).contains(&status) {
            return Err(malformed(0, "invalid status"));
        }
        let headers = read_headers(&mut r)?;
        let start = r.pos;
        Ok(Self { status, headers, body: buf.slice(start..) })
    }
}
