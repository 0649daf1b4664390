//! Client-side session cache file.
//!
//! The file persists session keys, so it is created with mode 0600. Layout,
//! in the same fixed-field big-endian style as the wire formats:
//!
//! ```text
//! "ICS1" | count u16 | count * (origin_len u16 | origin | session_id[32]
//!                               | key[32] | expire_t u64 | next_seq u64)
//! ```
//!
//! `next_seq` is a high-water mark: the writer stores the live counter plus
//! [`FLUSH_INTERVAL`], and flushes at least that often, so a restart after
//! a crash never reuses a sequence number (and thus a nonce).

use std::io::Write;
use std::path::Path;

use crate::crypto::{SymmetricKey, KEY_LEN};
use crate::wire::{SessionId, SESSION_ID_LEN};

pub const MAGIC: &[u8; 4] = b"ICS1";
pub const FLUSH_INTERVAL: u64 = 32;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("session cache io: {0}")]
    Io(#[from] std::io::Error),
    #[error("session cache file is corrupt")]
    Corrupt,
}

#[derive(Clone, PartialEq, Eq)]
pub struct SessionRecord {
    pub origin: String,
    pub session_id: SessionId,
    pub key: [u8; KEY_LEN],
    pub expire_t: u64,
    pub next_seq: u64,
}

impl std::fmt::Debug for SessionRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionRecord")
            .field("origin", &self.origin)
            .field("session_id", &self.session_id)
            .field("expire_t", &self.expire_t)
            .field("next_seq", &self.next_seq)
            .finish_non_exhaustive()
    }
}

impl Drop for SessionRecord {
    fn drop(&mut self) {
        zeroize::Zeroize::zeroize(&mut self.key);
    }
}

impl SessionRecord {
    pub fn symmetric_key(&self) -> SymmetricKey {
        SymmetricKey::from_raw(self.key)
    }
}

pub fn encode(records: &[SessionRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + records.len() * 120);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(records.len() as u16).to_be_bytes());
    for r in records {
        out.extend_from_slice(&(r.origin.len() as u16).to_be_bytes());
        out.extend_from_slice(r.origin.as_bytes());
        out.extend_from_slice(&r.session_id.0);
        out.extend_from_slice(&r.key);
        out.extend_from_slice(&r.expire_t.to_be_bytes());
        out.extend_from_slice(&r.next_seq.to_be_bytes());
    }
    out
}

pub fn decode(buf: &[u8]) -> Result<Vec<SessionRecord>, PersistError> {
    fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8], PersistError> {
        if buf.len() < n {
            return Err(PersistError::Corrupt);
        }
        let (head, tail) = buf.split_at(n);
        *buf = tail;
        Ok(head)
    }
    let mut cur = buf;
    if take(&mut cur, 4)? != MAGIC {
        return Err(PersistError::Corrupt);
    }
    let count = u16::from_be_bytes(take(&mut cur, 2)?.try_into().unwrap());
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = u16::from_be_bytes(take(&mut cur, 2)?.try_into().unwrap()) as usize;
        let origin = String::from_utf8(take(&mut cur, len)?.to_vec()).map_err(|_| PersistError::Corrupt)?;
        let session_id = SessionId(take(&mut cur, SESSION_ID_LEN)?.try_into().unwrap());
        let key = take(&mut cur, KEY_LEN)?.try_into().unwrap();
        let expire_t = u64::from_be_bytes(take(&mut cur, 8)?.try_into().unwrap());
        let next_seq = u64::from_be_bytes(take(&mut cur, 8)?.try_into().unwrap());
        out.push(SessionRecord { origin, session_id, key, expire_t, next_seq });
    }
    if !cur.is_empty() {
        return Err(PersistError::Corrupt);
    }
    Ok(out)
}

/// Writes atomically (temp file + rename) with owner-only permissions.
pub fn write_file(path: &Path, records: &[SessionRecord]) -> Result<(), PersistError> {
    let bytes = encode(records);
    let tmp = path.with_extension("tmp");
    {
        let mut opts = std::fs::OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut f = opts.open(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// A missing file reads as an empty cache.
pub fn read_file(path: &Path) -> Result<Vec<SessionRecord>, PersistError> {
    match std::fs::read(path) {
        Ok(bytes) => decode(&bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}
