//! Reproducible random streams.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::tree::mix64;

/// Identifies an independent substream: ChaCha8 keyed by `master_seed`,
/// using `stream_id` as the stream (nonce) selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct RandomStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RandomStream {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            stream_id: 0,
        }
    }

    /// Child stream number `index`; a pure function of `(self, index)`.
    pub fn substream(&self, index: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id: mix64(mix64(self.stream_id ^ 0x243f_6a88_85a3_08d3).wrapping_add(index)),
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.master_seed);
        inner.set_stream(self.stream_id);
        StreamRng {
            inner,
            buffer: 0,
            available: 0,
        }
    }
}

/// Source of small uniform integers, used for chain transitions.
pub trait SlotSource {
    /// Uniform value in `0..2^bits`, `bits <= 8`.
    fn slot(&mut self, bits: u32) -> u32;

    /// 64 uniform bits.
    fn word(&mut self) -> u64 {
        (0..8).fold(0, |acc, i| acc | (self.slot(8) as u64) << (8 * i))
    }
}

/// A seeded generator that also hands out a few bits at a time.
pub struct StreamRng {
    inner: ChaCha8Rng,
    buffer: u64,
    available: u32,
}

impl SlotSource for StreamRng {
    #[inline]
    fn slot(&mut self, bits: u32) -> u32 {
        debug_assert!((1..=8).contains(&bits));
        if self.available < bits {
            self.buffer = self.inner.next_u64();
            self.available = 64;
        }
        let value = (self.buffer & ((1 << bits) - 1)) as u32;
        self.buffer >>= bits;
        self.available -= bits;
        value
    }

    #[inline]
    fn word(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Replays a fixed slot sequence; panics when exhausted.
#[derive(Debug, Clone)]
pub struct FixedSlots(pub std::collections::VecDeque<u32>);

impl FixedSlots {
    pub fn new(slots: impl IntoIterator<Item = u32>) -> Self {
        Self(slots.into_iter().collect())
    }
}

impl SlotSource for FixedSlots {
    fn slot(&mut self, bits: u32) -> u32 {
        let v = self.0.pop_front().expect("fixed slot sequence exhausted");
        assert!(v < 1 << bits, "slot {v} does not fit in {bits} bits");
        v
    }
}
