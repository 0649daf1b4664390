use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use super::{SessionError, SessionState};
use crate::wire::SessionId;

/// Server-side session table. Expired and evicted sessions are
/// indistinguishable to callers: both look up as `SessionUnknown`.
#[derive(Debug)]
pub struct SessionStore {
    capacity: usize,
    inner: Mutex<Inner>,
}

#[derive(Debug, Default)]
struct Inner {
    map: HashMap<SessionId, Arc<SessionState>>,
    by_expiry: BTreeSet<(u64, SessionId)>,
}

impl Inner {
    fn remove(&mut self, id: &SessionId) -> Option<Arc<SessionState>> {
        let state = self.map.remove(id)?;
        self.by_expiry.remove(&(state.expire_t(), *id));
        Some(state)
    }
}

impl SessionStore {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            inner: Mutex::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("store lock poisoned").map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts a session; when full, the existing entry with the earliest
    /// expiry is evicted first. Returns the evicted id, if any.
    pub fn insert(&self, state: Arc<SessionState>) -> Option<SessionId> {
        let mut inner = self.inner.lock().expect("store lock poisoned");
        let id = *state.session_id();
        inner.remove(&id);
        let mut evicted = None;
        if inner.map.len() >= self.capacity {
            if let Some(&(_, victim)) = inner.by_expiry.iter().next() {
                inner.remove(&victim);
                evicted = Some(victim);
            }
        }
        inner.by_expiry.insert((state.expire_t(), id));
        inner.map.insert(id, state);
        evicted
    }

    pub fn lookup(&self, id: &SessionId, now: u64) -> Result<Arc<SessionState>, SessionError> {
        let mut inner = self.inner.lock().expect("store lock poisoned");
        match inner.map.get(id) {
            Some(state) if !state.is_expired(now) => Ok(Arc::clone(state)),
            Some(_) => {
                inner.remove(id);
                Err(SessionError::SessionUnknown)
            }
            None => Err(SessionError::SessionUnknown),
        }
    }

    pub fn remove(&self, id: &SessionId) -> bool {
        self.inner.lock().expect("store lock poisoned").remove(id).is_some()
    }

    /// Drops every session with `expire_t <= now`; returns how many.
    pub fn sweep(&self, now: u64) -> usize {
        let mut inner = self.inner.lock().expect("store lock poisoned");
        let expired: Vec<SessionId> = inner
            .by_expiry
            .iter()
            .take_while(|(exp, _)| *exp <= now)
            .map(|(_, id)| *id)
            .collect();
        for id in &expired {
            inner.remove(id);
        }
        expired.len()
    }
}
