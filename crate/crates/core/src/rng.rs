//! Shared randomness handle.
//!
//! Production code draws from the operating system. Deterministic runs
//! (`--seed`) use a ChaCha20 stream behind a mutex so every consumer in the
//! process pulls from one reproducible sequence.

use std::sync::{Arc, Mutex};

use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Clone)]
pub struct SharedRng(Inner);

#[derive(Clone)]
enum Inner {
    Os,
    Seeded(Arc<Mutex<ChaCha20Rng>>),
}

impl SharedRng {
    pub fn os() -> Self {
        Self(Inner::Os)
    }

    pub fn seeded(seed: u64) -> Self {
        Self(Inner::Seeded(Arc::new(Mutex::new(ChaCha20Rng::seed_from_u64(
            seed,
        )))))
    }

    pub fn from_option(seed: Option<u64>) -> Self {
        seed.map_or_else(Self::os, Self::seeded)
    }

    pub fn array<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        self.fill_bytes(&mut out);
        out
    }
}

impl std::fmt::Debug for SharedRng {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Inner::Os => f.write_str("SharedRng(os)"),
            Inner::Seeded(_) => f.write_str("SharedRng(seeded)"),
        }
    }
}

impl RngCore for SharedRng {
    fn next_u32(&mut self) -> u32 {
        let mut b = [0u8; 4];
        self.fill_bytes(&mut b);
        u32::from_le_bytes(b)
    }

    fn next_u64(&mut self) -> u64 {
        let mut b = [0u8; 8];
        self.fill_bytes(&mut b);
        u64::from_le_bytes(b)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        match &self.0 {
            Inner::Os => OsRng.fill_bytes(dest),
            Inner::Seeded(rng) => rng.lock().expect("rng poisoned").fill_bytes(dest),
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        match &self.0 {
            Inner::Os => OsRng.try_fill_bytes(dest),
            Inner::Seeded(rng) => rng.lock().expect("rng poisoned").try_fill_bytes(dest),
        }
    }
}

impl CryptoRng for SharedRng {}
