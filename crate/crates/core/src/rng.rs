//! Reproducible random streams.
//!
//! A stream is a ChaCha8 keystream keyed by a 64-bit seed and selected by a
//! 64-bit stream id, so `stream(seed, task)` is a pure function of its inputs
//! and independent of scheduling or platform.

use std::ops::Range;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Stream for task `index` of the sub-experiment labelled `tag`.
    pub fn for_task(seed: u64, tag: &str, index: u64) -> Self {
        Self::new(mix_seed(seed, tag), index)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(self)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits.
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
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

/// Samples per stream in [`par_chunks`].
pub const CHUNK_SIZE: usize = 4096;

/// Split `n` draws into fixed chunks of [`CHUNK_SIZE`], run `f` on each chunk
/// with its own stream `(seed, tag, chunk)`, and return the per-chunk results
/// in chunk order. The output does not depend on the thread count.
pub fn par_chunks<T, F>(seed: u64, tag: &str, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream, Range<usize>) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK_SIZE);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = RngStream::for_task(seed, tag, c as u64);
            f(&mut rng, c * CHUNK_SIZE..((c + 1) * CHUNK_SIZE).min(n))
        })
        .collect()
}

/// `n` independent draws of `f`, generated in parallel chunks.
pub fn par_collect<T, F>(seed: u64, tag: &str, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream) -> T + Sync,
{
    par_chunks(seed, tag, n, |rng, range| range.map(|_| f(rng)).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect()
}

/// Derive a sub-seed from `seed` and a label (FNV-1a over the label, then a
/// SplitMix64 finaliser).
pub fn mix_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
