//! Named, seeded random streams.
//!
//! Every consumer of randomness owns one `RngStream`. A stream is fully
//! determined by `(seed, stream_id)`, so any worker can be replayed in
//! isolation from the rest of the simulation.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DATA_STREAM: u64 = 1;
pub const PARTITION_STREAM: u64 = 2;
pub const AUX_STREAM: u64 = 3;
pub const INIT_STREAM: u64 = 4;
const WORKER_BASE: u64 = 1 << 32;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn worker(seed: u64, worker_id: usize) -> Self {
        Self::new(seed, WORKER_BASE + worker_id as u64)
    }

    /// Stream keyed by a label and an index, e.g. `("q_recursion", trial)`.
    pub fn keyed(seed: u64, label: &str, index: u64) -> Self {
        let h = fnv1a(label.as_bytes());
        // Keep keyed streams out of the small fixed ids and the worker range.
        let id = (h | (1 << 63)) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Self::new(seed, id | (1 << 63))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl RngCore for RngStream {
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
