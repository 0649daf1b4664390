//! Anti-replay sliding window.
//!
//! A ring bitmap of `size` bits indexed by `seq % size` tracks which of the
//! sequence numbers in `(right_edge - size, right_edge]` were accepted.
//! Unlike TCP, an unseen number below the right edge is still accepted as
//! long as it is inside the window.

pub const DEFAULT_WINDOW: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowDecision {
    Accept,
    Duplicate,
    TooOld,
}

#[derive(Debug, Clone)]
pub struct SlidingWindow {
    size: u64,
    right_edge: Option<u64>,
    bits: Vec<u64>,
}

impl Default for SlidingWindow {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW)
    }
}

impl SlidingWindow {
    /// `size` is rounded up to a multiple of 64 (minimum 64).
    pub fn new(size: u64) -> Self {
        let size = size.max(64).div_ceil(64) * 64;
        Self {
            size,
            right_edge: None,
            bits: vec![0; (size / 64) as usize],
        }
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn right_edge(&self) -> Option<u64> {
        self.right_edge
    }

    fn slot(&self, seq: u64) -> (usize, u64) {
        let idx = seq % self.size;
        ((idx / 64) as usize, 1u64 << (idx % 64))
    }

    /// Decision without updating the window.
    pub fn check(&self, seq: u64) -> WindowDecision {
        match self.right_edge {
            None => WindowDecision::Accept,
            Some(right) if seq > right => WindowDecision::Accept,
            Some(right) if right - seq >= self.size => WindowDecision::TooOld,
            Some(_) => {
                let (word, mask) = self.slot(seq);
                if self.bits[word] & mask != 0 {
                    WindowDecision::Duplicate
                } else {
                    WindowDecision::Accept
                }
            }
        }
    }

    pub fn check_and_update(&mut self, seq: u64) -> WindowDecision {
        let decision = self.check(seq);
        if decision != WindowDecision::Accept {
            return decision;
        }
        match self.right_edge {
            Some(right) if seq <= right => {}
            Some(right) if seq - right < self.size => self.clear_range(right + 1, seq),
            _ => self.bits.iter_mut().for_each(|w| *w = 0),
        }
        if self.right_edge.is_none_or(|r| seq > r) {
            self.right_edge = Some(seq);
        }
        let (word, mask) = self.slot(seq);
        self.bits[word] |= mask;
        decision
    }

    // Clears the slots of every sequence in [from, to]; the range is shorter
    // than the window so no slot is visited twice.
    fn clear_range(&mut self, from: u64, to: u64) {
        let mut s = from;
        loop {
            let step = if s % 64 == 0 && to - s >= 63 {
                let (word, _) = self.slot(s);
                self.bits[word] = 0;
                64
            } else {
                let (word, mask) = self.slot(s);
                self.bits[word] &= !mask;
                1
            };
            match s.checked_add(step) {
                Some(next) if next <= to => s = next,
                _ => break,
            }
        }
    }
}
