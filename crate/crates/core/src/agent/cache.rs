//! Per-origin client sessions, optionally persisted so a session outlives
//! the process.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::session::persist::{self, PersistError, SessionRecord, FLUSH_INTERVAL};
use crate::session::SessionState;

#[derive(Debug)]
struct Entry {
    state: Arc<SessionState>,
    /// Highest counter value the file promises is unused.
    persisted_mark: u64,
}

#[derive(Debug, Default)]
pub struct ClientSessionCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, Entry>>,
}

impl ClientSessionCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads (or starts) the cache file at `path`. Expired records are
    /// dropped on load.
    pub fn open(path: &Path, now: u64) -> Result<Self, PersistError> {
        let entries = persist::read_file(path)?
            .into_iter()
            .filter(|r| r.expire_t > now)
            .map(|r| {
                let state = SessionState::restore_client(r.session_id, r.symmetric_key(), r.expire_t, r.next_seq);
                (
                    r.origin.clone(),
                    Entry {
                        state: Arc::new(state),
                        persisted_mark: r.next_seq,
                    },
                )
            })
            .collect();
        Ok(ClientSessionCache {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
        })
    }

    pub fn is_persistent(&self) -> bool {
        self.path.is_some()
    }

    /// A live session for `origin`; expired ones are evicted.
    pub fn get(&self, origin: &str, now: u64) -> Option<Arc<SessionState>> {
        let mut entries = self.entries.lock().expect("session cache lock");
        match entries.get(origin) {
            Some(e) if !e.state.is_expired(now) => Some(Arc::clone(&e.state)),
            Some(_) => {
                entries.remove(origin);
                None
            }
            None => None,
        }
    }

    pub fn put(&self, origin: &str, state: Arc<SessionState>) -> Result<(), PersistError> {
        let mut entries = self.entries.lock().expect("session cache lock");
        entries.insert(
            origin.to_string(),
            Entry {
                state,
                persisted_mark: 0,
            },
        );
        self.flush_locked(&mut entries)
    }

    pub fn remove(&self, origin: &str) -> Result<(), PersistError> {
        let mut entries = self.entries.lock().expect("session cache lock");
        entries.remove(origin);
        self.flush_locked(&mut entries)
    }

    /// Runs `seal` with the guarantee that the counter it consumes is
    /// covered by the file on disk. For persistent caches this serializes
    /// sealing so the check and the counter increment cannot interleave.
    pub fn sealing<T>(&self, origin: &str, state: &SessionState, seal: impl FnOnce() -> T) -> Result<T, PersistError> {
        if self.path.is_none() {
            return Ok(seal());
        }
        let mut entries = self.entries.lock().expect("session cache lock");
        let stale = entries
            .get(origin)
            .filter(|e| std::ptr::eq(Arc::as_ptr(&e.state), state))
            .is_some_and(|e| state.next_send_seq() >= e.persisted_mark);
        if stale {
            self.flush_locked(&mut entries)?;
        }
        Ok(seal())
    }

    pub fn flush(&self) -> Result<(), PersistError> {
        let mut entries = self.entries.lock().expect("session cache lock");
        self.flush_locked(&mut entries)
    }

    fn flush_locked(&self, entries: &mut HashMap<String, Entry>) -> Result<(), PersistError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut records = Vec::with_capacity(entries.len());
        let mut origins: Vec<&String> = entries.keys().collect();
        origins.sort();
        let mut marks = Vec::with_capacity(entries.len());
        for origin in origins {
            let e = &entries[origin];
            let mark = (e.state.next_send_seq() + FLUSH_INTERVAL).max(e.persisted_mark);
            marks.push((origin.clone(), mark));
            records.push(SessionRecord {
                origin: origin.clone(),
                session_id: *e.state.session_id(),
                key: *e.state.key().raw_bytes(),
                expire_t: e.state.expire_t(),
                next_seq: mark,
            });
        }
        persist::write_file(path, &records)?;
        for (origin, mark) in marks {
            if let Some(e) = entries.get_mut(&origin) {
                e.persisted_mark = mark;
            }
        }
        Ok(())
    }
}
