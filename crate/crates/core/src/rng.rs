//! Counter-based splittable random number generation.
//!
//! Each draw is a pure function of `(seed, stream_id, counter)`, so
//! sequences are bit-identical across runs and platforms, and distinct
//! stream ids give statistically independent streams. Ensemble members
//! and training noise sources each get their own stream.

use crate::error::Result;
use crate::tensor::Tensor;

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const MULT_A: u64 = 0xbf58_476d_1ce4_e5b9;
const MULT_B: u64 = 0x94d0_49bb_1331_11eb;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MULT_A);
    z = (z ^ (z >> 27)).wrapping_mul(MULT_B);
    z ^ (z >> 31)
}

#[inline]
fn prf(seed: u64, stream: u64, counter: u64) -> u64 {
    let mut h = mix(seed ^ GAMMA);
    h = mix(h ^ stream.wrapping_mul(MULT_A));
    mix(h ^ counter.wrapping_mul(MULT_B))
}

/// A deterministic stream of pseudo-random numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream {
            seed,
            stream_id,
            counter: 0,
        }
    }

    /// Derive an independent child stream identified by `tag`. The child
    /// starts at counter 0 and does not advance this stream.
    pub fn child(&self, tag: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: mix(self.stream_id.wrapping_mul(MULT_A) ^ tag.wrapping_add(GAMMA)),
            counter: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = prf(self.seed, self.stream_id, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform draw strictly inside (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        // Desk-scale n; modulo bias is negligible for n << 2^64.
        self.next_u64() % n
    }

    /// Standard normal draw (Box-Muller; consumes two counter ticks).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Tensor of i.i.d. standard normal draws.
    pub fn gaussian(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| self.normal()).collect();
        Tensor::from_vec(data, shape)
    }

    /// Deterministic in-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
