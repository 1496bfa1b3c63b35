//! Deterministic seeded random streams.
//!
//! Everything stochastic in this crate (weight init, action sampling,
//! perception noise, minibatch shuffles) draws from a [`SeedStream`], a
//! SplitMix64 generator. The stream is a single `u64` of state, so world
//! states stay trivially serializable and digestible, and results are
//! bit-identical across platforms.
//!
//! Parallel work uses [`SeedStream::split`] / [`SeedStream::derive`]:
//! child streams are keyed by label, so the aggregate result of a fan-out
//! does not depend on scheduling order.

use serde::{Deserialize, Serialize};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 stream with labeled splitting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStream {
    state: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[0, n)`.
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_f64() * n as f64) as usize % n
    }

    /// Standard normal via Box-Muller.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64().max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Child stream advanced from this one and keyed by `label`.
    pub fn split(&mut self, label: u64) -> SeedStream {
        SeedStream::new(mix64(self.next_u64() ^ mix64(label)))
    }

    /// Child stream derived from a root seed and labels alone, independent
    /// of any stream state. Order-insensitive fan-out uses this.
    pub fn derive(seed: u64, labels: &[u64]) -> SeedStream {
        let mut s = mix64(seed);
        for &l in labels {
            s = mix64(s ^ mix64(l.wrapping_add(GOLDEN_GAMMA)));
        }
        SeedStream::new(s)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn state(&self) -> u64 {
        self.state
    }
}
