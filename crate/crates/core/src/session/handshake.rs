//! Signed ephemeral-ECDH handshake.
//!
//! 1. client: fresh ephemeral, sends its share.
//! 2. server: fresh ephemeral, random session id, expiry; signs the
//!    transcript (both shares, session id, expiry) with the site key and
//!    registers the derived session.
//! 3. client: verifies the signature against the DNS-published key before
//!    touching the shared secret, then derives the same key.

use std::sync::Arc;

use rand::{CryptoRng, RngCore};

use super::{SessionError, SessionState, SessionStore, DEFAULT_SESSION_TTL, DEFAULT_WINDOW};
use crate::crypto::{self, EphemeralKeyPair, PublicKey, SigningKeyPair};
use crate::wire::{transcript_bytes, ClientHello, ServerHello, SessionId, SESSION_ID_LEN};

/// Client half of an in-flight handshake. Owns the ephemeral scalar, which
/// is dropped (and wiped) when the handshake completes or is abandoned.
#[derive(Debug)]
pub struct PendingHandshake {
    ephemeral: EphemeralKeyPair,
    hello: ClientHello,
}

impl PendingHandshake {
    pub fn hello(&self) -> &ClientHello {
        &self.hello
    }
}

pub fn client_begin<R: RngCore + CryptoRng>(rng: &mut R) -> Result<(ClientHello, PendingHandshake), SessionError> {
    let ephemeral = crypto::generate_ephemeral(rng)?;
    let hello = ClientHello { client_share: *ephemeral.public_point() };
    Ok((hello.clone(), PendingHandshake { ephemeral, hello }))
}

#[derive(Debug, Clone, Copy)]
pub struct ServerHandshakeConfig {
    pub session_ttl: u64,
    pub window: u64,
}

impl Default for ServerHandshakeConfig {
    fn default() -> Self {
        Self { session_ttl: DEFAULT_SESSION_TTL, window: DEFAULT_WINDOW }
    }
}

/// Answers a ClientHello and registers the new session in `store`. Every
/// failure collapses into `HandshakeRejected`.
pub fn server_respond<R: RngCore + CryptoRng>(
    hello: &ClientHello,
    signing_key: &SigningKeyPair,
    config: &ServerHandshakeConfig,
    now: u64,
    rng: &mut R,
    store: &SessionStore,
) -> Result<ServerHello, SessionError> {
    let reject = |_| SessionError::HandshakeRejected;
    let ephemeral = crypto::generate_ephemeral(rng).map_err(reject)?;
    let shared = crypto::ecdh(&ephemeral, &hello.client_share).map_err(reject)?;
    let mut sid = [0u8; SESSION_ID_LEN];
    rng.try_fill_bytes(&mut sid).map_err(|_| SessionError::HandshakeRejected)?;
    let session_id = SessionId(sid);
    let expire_t = now.checked_add(config.session_ttl.max(1)).ok_or(SessionError::HandshakeRejected)?;

    let server_share = *ephemeral.public_point();
    let transcript = transcript_bytes(hello, &server_share, &session_id, expire_t);
    let signature = crypto::sign(signing_key, &transcript);
    let key = crypto::derive_session_key(&shared, &transcript);
    store.insert(Arc::new(SessionState::new_server(session_id, key, expire_t, config.window)));

    Ok(ServerHello {
        server_share,
        session_id,
        expire_t,
        sig_alg: signing_key.alg(),
        signature,
    })
}

pub fn client_complete(
    pending: PendingHandshake,
    server_hello: &ServerHello,
    server_public_key: &PublicKey,
    now: u64,
) -> Result<SessionState, SessionError> {
    let transcript = transcript_bytes(
        &pending.hello,
        &server_hello.server_share,
        &server_hello.session_id,
        server_hello.expire_t,
    );
    if !crypto::verify(server_public_key, server_hello.sig_alg, &transcript, &server_hello.signature) {
        return Err(SessionError::SignatureInvalid);
    }
    if server_hello.expire_t <= now {
        return Err(SessionError::SessionExpired);
    }
    let shared = crypto::ecdh(&pending.ephemeral, &server_hello.server_share)?;
    let key = crypto::derive_session_key(&shared, &transcript);
    Ok(SessionState::new_client(server_hello.session_id, key, server_hello.expire_t))
}
