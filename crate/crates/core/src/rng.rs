//! Deterministic counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream keyed by the global seed and selected by
//! a 64-bit stream id, so `(seed, stream_id)` fixes the variate sequence on every
//! platform and distinct stream ids never share keystream blocks. The engine gives
//! each particle its own stream, which is what makes results independent of how
//! particles are spread over worker threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream-id namespaces. The top 16 bits of a stream id select the namespace and
/// the lower 48 bits index within it.
pub mod domain {
    pub const PARTICLE: u16 = 0;
    pub const SYNTHESIS: u16 = 1;
    pub const BITS: u16 = 2;
    pub const RELAY: u16 = 3;
    pub const FREE_SPACE: u16 = 4;
}

/// Compose a stream id from a namespace and an index inside it.
pub fn stream_id(domain: u16, index: u64) -> u64 {
    debug_assert!(index < (1 << 48), "stream index overflows its namespace");
    (u64::from(domain) << 48) | (index & ((1 << 48) - 1))
}

/// A reproducible random stream identified by `(global_seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    global_seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

/// Build the stream for `(seed, stream_id)`.
pub fn derive_stream(seed: u64, stream_id: u64) -> RngStream {
    RngStream::new(seed, stream_id)
}

impl RngStream {
    pub fn new(global_seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = global_seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream_id);
        Self {
            global_seed,
            stream_id,
            inner,
        }
    }

    pub fn global_seed(&self) -> u64 {
        self.global_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Standard normal draw.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// `true` with probability `p`. Probabilities outside `(0, 1)` do not consume
    /// randomness.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.uniform() < p
        }
    }
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

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
