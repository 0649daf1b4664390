//! Inner-channel sessions: handshake, key schedule, nonce assignment,
//! replay protection and the server-side session store.
//!
//! Both directions share one AES-256-GCM key. Directions are separated by
//! the first nonce byte and the AAD, and each side keeps its own send
//! counter, so a `(key, nonce)` pair never repeats:
//!
//! ```text
//! nonce     = direction u8 | 0x00 0x00 0x00 | counter u64
//! plaintext = seq u64 | payload
//! ```
//!
//! For requests `seq` is the client's counter. Responses echo the request's
//! `seq` in the plaintext while their nonce uses the server's own counter.

mod handshake;
pub mod persist;
mod store;
mod window;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::Mutex;

use bytes::{Bytes, BytesMut};
use thiserror::Error;

use crate::crypto::{self, CryptoError, Nonce, SymmetricKey, TAG_LEN};
use crate::wire::{Direction, Envelope, SessionId, WireError, ENVELOPE_HEADER_LEN};

pub use handshake::{client_begin, client_complete, server_respond, PendingHandshake, ServerHandshakeConfig};
pub use store::SessionStore;
pub use window::{SlidingWindow, WindowDecision, DEFAULT_WINDOW};

/// Default session lifetime: seven days.
pub const DEFAULT_SESSION_TTL: u64 = 7 * 24 * 3600;

/// Responses a client keeps waiting for before the oldest are forgotten.
const MAX_OUTSTANDING: usize = 4096;

/// Per-session cap on random-nonce cookie encryptions.
pub const COOKIE_ENCRYPTION_CAP: u32 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error("authentication failure")]
    AuthFailure,
    #[error("replayed or out-of-window sequence number")]
    Replay,
    #[error("no session for this id")]
    SessionUnknown,
    #[error("session expired")]
    SessionExpired,
    #[error("server signature invalid")]
    SignatureInvalid,
    #[error("handshake rejected")]
    HandshakeRejected,
    #[error("response sequence number was not issued by this client")]
    SequenceMismatch,
    #[error("sequence space exhausted")]
    SequenceExhausted,
    #[error("cookie encryption limit reached for this session")]
    CookieLimit,
    #[error("operation not valid for a {0:?} session")]
    WrongRole(Role),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

#[derive(Debug)]
enum Receive {
    /// Server: which request sequence numbers were already accepted.
    Window(SlidingWindow),
    /// Client: request sequence numbers still awaiting a response.
    Outstanding(BTreeSet<u64>),
}

/// An opened envelope.
#[derive(Debug, Clone)]
pub struct Opened {
    pub seq: u64,
    pub payload: Bytes,
}

#[derive(Debug)]
pub struct SessionState {
    session_id: SessionId,
    key: SymmetricKey,
    expire_t: u64,
    role: Role,
    send_seq: AtomicU64,
    recv: Mutex<Receive>,
    cookie_count: AtomicU32,
}

/// Bytes in front of the payload: envelope header plus sequence number.
pub const SEAL_PREFIX: usize = ENVELOPE_HEADER_LEN + 8;

/// An empty plaintext buffer with room reserved for the envelope header;
/// append the payload, then hand it to [`SessionState::seal_response_buffer`].
pub fn response_buffer(payload_hint: usize) -> Vec<u8> {
    let mut buf = Vec::with_capacity(SEAL_PREFIX + payload_hint + TAG_LEN);
    buf.resize(SEAL_PREFIX, 0);
    buf
}

fn nonce_for(direction: Direction, counter: u64) -> Nonce {
    let mut n = [0u8; 12];
    n[0] = direction as u8;
    n[4..].copy_from_slice(&counter.to_be_bytes());
    n
}

impl SessionState {
    pub fn new_server(session_id: SessionId, key: SymmetricKey, expire_t: u64, window: u64) -> Self {
        Self::build(Role::Server, session_id, key, expire_t, 0, Receive::Window(SlidingWindow::new(window)))
    }

    pub fn new_client(session_id: SessionId, key: SymmetricKey, expire_t: u64) -> Self {
        Self::restore_client(session_id, key, expire_t, 0)
    }

    /// Client state reloaded from the session cache, resuming the request
    /// counter at the persisted high-water mark.
    pub fn restore_client(session_id: SessionId, key: SymmetricKey, expire_t: u64, next_seq: u64) -> Self {
        Self::build(Role::Client, session_id, key, expire_t, next_seq, Receive::Outstanding(BTreeSet::new()))
    }

    fn build(role: Role, session_id: SessionId, key: SymmetricKey, expire_t: u64, next_seq: u64, recv: Receive) -> Self {
        Self {
            session_id,
            key,
            expire_t,
            role,
            send_seq: AtomicU64::new(next_seq),
            recv: Mutex::new(recv),
            cookie_count: AtomicU32::new(0),
        }
    }

    pub fn session_id(&self) -> &SessionId {
        &self.session_id
    }

    pub fn expire_t(&self) -> u64 {
        self.expire_t
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn key(&self) -> &SymmetricKey {
        &self.key
    }

    /// Next counter value this side will use.
    pub fn next_send_seq(&self) -> u64 {
        self.send_seq.load(Ordering::SeqCst)
    }

    pub fn is_expired(&self, now: u64) -> bool {
        now >= self.expire_t
    }

    fn ensure_live(&self, now: u64) -> Result<(), SessionError> {
        if self.is_expired(now) {
            return Err(SessionError::SessionExpired);
        }
        Ok(())
    }

    fn require(&self, role: Role) -> Result<(), SessionError> {
        if self.role != role {
            return Err(SessionError::WrongRole(self.role));
        }
        Ok(())
    }

    fn next_counter(&self) -> Result<u64, SessionError> {
        let seq = self.send_seq.fetch_add(1, Ordering::SeqCst);
        if seq == u64::MAX {
            return Err(SessionError::SequenceExhausted);
        }
        Ok(seq)
    }

    /// Seals a request. Returns the sequence number the response must echo
    /// and the encoded envelope.
    pub fn seal_request(&self, now: u64, payload: &[u8]) -> Result<(u64, Vec<u8>), SessionError> {
        self.seal_request_with(now, payload.len(), |buf| buf.extend_from_slice(payload))
    }

    /// Like [`Self::seal_request`] but lets the caller write the payload
    /// straight into the envelope buffer.
    pub fn seal_request_with(
        &self,
        now: u64,
        size_hint: usize,
        write: impl FnOnce(&mut Vec<u8>),
    ) -> Result<(u64, Vec<u8>), SessionError> {
        self.require(Role::Client)?;
        self.ensure_live(now)?;
        let seq = self.next_counter()?;
        {
            let mut recv = self.recv.lock().expect("session lock poisoned");
            if let Receive::Outstanding(set) = &mut *recv {
                set.insert(seq);
                while set.len() > MAX_OUTSTANDING {
                    set.pop_first();
                }
            }
        }
        Ok((seq, self.seal_raw(Direction::Request, seq, seq, size_hint, write)))
    }

    pub fn seal_response(&self, now: u64, request_seq: u64, payload: &[u8]) -> Result<Vec<u8>, SessionError> {
        self.seal_response_with(now, request_seq, payload.len(), |buf| buf.extend_from_slice(payload))
    }

    pub fn seal_response_with(
        &self,
        now: u64,
        request_seq: u64,
        size_hint: usize,
        write: impl FnOnce(&mut Vec<u8>),
    ) -> Result<Vec<u8>, SessionError> {
        self.require(Role::Server)?;
        self.ensure_live(now)?;
        let counter = self.next_counter()?;
        Ok(self.seal_raw(Direction::Response, counter, request_seq, size_hint, write))
    }

    /// Seals a response whose payload the caller has already appended to a
    /// buffer from [`response_buffer`], so large bodies are copied once.
    pub fn seal_response_buffer(&self, now: u64, request_seq: u64, buf: Vec<u8>) -> Result<Vec<u8>, SessionError> {
        self.require(Role::Server)?;
        self.ensure_live(now)?;
        if buf.len() < SEAL_PREFIX {
            return Err(SessionError::Wire(WireError::LengthMismatch { expected: SEAL_PREFIX, actual: buf.len() }));
        }
        let counter = self.next_counter()?;
        Ok(self.seal_prepared(Direction::Response, counter, request_seq, buf))
    }

    fn seal_raw(
        &self,
        direction: Direction,
        counter: u64,
        seq: u64,
        size_hint: usize,
        write: impl FnOnce(&mut Vec<u8>),
    ) -> Vec<u8> {
        let mut buf = response_buffer(size_hint);
        write(&mut buf);
        self.seal_prepared(direction, counter, seq, buf)
    }

    fn seal_prepared(&self, direction: Direction, counter: u64, seq: u64, mut buf: Vec<u8>) -> Vec<u8> {
        let nonce = nonce_for(direction, counter);
        buf[..ENVELOPE_HEADER_LEN].copy_from_slice(&Envelope::header(direction, &self.session_id, &nonce));
        buf[ENVELOPE_HEADER_LEN..SEAL_PREFIX].copy_from_slice(&seq.to_be_bytes());
        let aad = Envelope::aad(direction, &self.session_id);
        crypto::seal_in_place(&self.key, &nonce, &aad, &mut buf, ENVELOPE_HEADER_LEN);
        buf
    }

    fn decrypt(&self, env: Envelope, direction: Direction) -> Result<(u64, u64, Bytes), SessionError> {
        if env.session_id != self.session_id {
            return Err(SessionError::SessionUnknown);
        }
        if env.direction != direction || env.nonce[0] != direction as u8 || env.nonce[1..4] != [0, 0, 0] {
            return Err(SessionError::AuthFailure);
        }
        let counter = u64::from_be_bytes(env.nonce[4..].try_into().unwrap());
        let aad = Envelope::aad(direction, &self.session_id);
        // decrypt where the bytes already are when nobody else holds them
        let mut buf = env.ciphertext.try_into_mut().unwrap_or_else(|shared| BytesMut::from(&shared[..]));
        let len = crypto::open_in_place(&self.key, &env.nonce, &aad, &mut buf).map_err(|_| SessionError::AuthFailure)?;
        if len < 8 {
            return Err(SessionError::AuthFailure);
        }
        buf.truncate(len);
        let seq = u64::from_be_bytes(buf[..8].try_into().unwrap());
        Ok((counter, seq, buf.freeze().slice(8..)))
    }

    /// Server side: authenticate, then consult the replay window. The window
    /// only moves for authentic envelopes.
    pub fn open_request(&self, now: u64, env: Envelope) -> Result<Opened, SessionError> {
        self.require(Role::Server)?;
        self.ensure_live(now)?;
        let (counter, seq, payload) = self.decrypt(env, Direction::Request)?;
        if counter != seq {
            return Err(SessionError::AuthFailure);
        }
        let mut recv = self.recv.lock().expect("session lock poisoned");
        let Receive::Window(window) = &mut *recv else {
            unreachable!("server sessions own a window")
        };
        match window.check_and_update(seq) {
            WindowDecision::Accept => Ok(Opened { seq, payload }),
            WindowDecision::Duplicate | WindowDecision::TooOld => Err(SessionError::Replay),
        }
    }

    /// Client side: the echoed sequence number must belong to a request
    /// this client sent and has not yet seen answered.
    pub fn open_response(&self, now: u64, env: Envelope) -> Result<Opened, SessionError> {
        self.require(Role::Client)?;
        self.ensure_live(now)?;
        let (_, seq, payload) = self.decrypt(env, Direction::Response)?;
        let mut recv = self.recv.lock().expect("session lock poisoned");
        let Receive::Outstanding(set) = &mut *recv else {
            unreachable!("client sessions track outstanding requests")
        };
        if !set.remove(&seq) {
            return Err(SessionError::SequenceMismatch);
        }
        Ok(Opened { seq, payload })
    }

    /// As [`Self::open_response`], additionally requiring the echo to match
    /// one specific request.
    pub fn open_response_for(&self, now: u64, env: Envelope, expected_seq: u64) -> Result<Opened, SessionError> {
        self.require(Role::Client)?;
        self.ensure_live(now)?;
        let (_, seq, payload) = self.decrypt(env, Direction::Response)?;
        let mut recv = self.recv.lock().expect("session lock poisoned");
        let Receive::Outstanding(set) = &mut *recv else {
            unreachable!("client sessions track outstanding requests")
        };
        if seq != expected_seq || !set.remove(&seq) {
            return Err(SessionError::SequenceMismatch);
        }
        Ok(Opened { seq, payload })
    }

    /// Reserves one random-nonce cookie encryption under this key.
    pub(crate) fn reserve_cookie_encryption(&self) -> Result<(), SessionError> {
        let prev = self.cookie_count.fetch_add(1, Ordering::SeqCst);
        if prev >= COOKIE_ENCRYPTION_CAP {
            self.cookie_count.store(COOKIE_ENCRYPTION_CAP, Ordering::SeqCst);
            return Err(SessionError::CookieLimit);
        }
        Ok(())
    }
}
