//! Private cookie values are encrypted under the session key, so a cookie
//! lifted from CDN-visible traffic is useless outside its session.
//!
//! The AAD binds each ciphertext to the session and the cookie name:
//! `"invicloak v1 cookie" | session_id | name`.

use rand::RngCore;

use crate::crypto::{self, NONCE_LEN};
use crate::session::{SessionError, SessionState};
use crate::wire::{CipherCookieValue, SessionId};

pub const COOKIE_AAD_LABEL: &[u8] = b"invicloak v1 cookie";

fn aad(session_id: &SessionId, name: &str) -> Vec<u8> {
    let mut aad = Vec::with_capacity(COOKIE_AAD_LABEL.len() + 32 + name.len());
    aad.extend_from_slice(COOKIE_AAD_LABEL);
    aad.extend_from_slice(session_id.as_bytes());
    aad.extend_from_slice(name.as_bytes());
    aad
}

pub fn encrypt_cookie(
    state: &SessionState,
    name: &str,
    value: &[u8],
    rng: &mut impl RngCore,
) -> Result<String, SessionError> {
    state.reserve_cookie_encryption()?;
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ciphertext = crypto::aead_seal(state.key(), &nonce, &aad(state.session_id(), name), value);
    Ok(CipherCookieValue { nonce, ciphertext }.encode())
}

pub fn decrypt_cookie(state: &SessionState, name: &str, value: &str) -> Result<Vec<u8>, SessionError> {
    let cookie = CipherCookieValue::decode(value)?;
    crypto::aead_open(state.key(), &cookie.nonce, &aad(state.session_id(), name), &cookie.ciphertext)
        .map_err(|_| SessionError::AuthFailure)
}

/// Rewrites a `Cookie` request header: private cookies are decrypted, and
/// any that fail (or arrive in plaintext) are dropped. Returns `None` when
/// nothing is left.
pub fn open_cookie_header(state: &SessionState, header: &str, is_private: impl Fn(&str) -> bool) -> Option<String> {
    let kept: Vec<String> = header
        .split(';')
        .map(str::trim)
        .filter(|pair| !pair.is_empty())
        .filter_map(|pair| {
            let (name, value) = pair.split_once('=').unwrap_or((pair, ""));
            if !is_private(name) {
                return Some(pair.to_string());
            }
            let plain = decrypt_cookie(state, name, value).ok()?;
            let plain = String::from_utf8(plain).ok()?;
            Some(format!("{name}={plain}"))
        })
        .collect();
    (!kept.is_empty()).then(|| kept.join("; "))
}

/// Rewrites one `Set-Cookie` header value, encrypting the value of a
/// private cookie and leaving the attributes alone. Non-private cookies
/// pass through.
pub fn seal_set_cookie(
    state: &SessionState,
    header: &str,
    is_private: impl Fn(&str) -> bool,
    rng: &mut impl RngCore,
) -> Result<String, SessionError> {
    let (pair, attrs) = match header.find(';') {
        Some(i) => header.split_at(i),
        None => (header, ""),
    };
    let Some((name, value)) = pair.split_once('=') else {
        return Ok(header.to_string());
    };
    let name = name.trim();
    if !is_private(name) {
        return Ok(header.to_string());
    }
    let value = value.trim().trim_matches('"');
    let sealed = encrypt_cookie(state, name, value.as_bytes(), rng)?;
    Ok(format!("{name}={sealed}{attrs}"))
}
