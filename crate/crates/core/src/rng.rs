//! Seeded, splittable random streams.
//!
//! A stream is ChaCha8 keyed by a SplitMix64 expansion of a 64-bit seed, with
//! the ChaCha stream word set to `stream_id`. Uniforms use the top 53 bits of
//! one output word, mapped into the open interval (0, 1). Every continuous draw
//! is an inverse-CDF transform of exactly one uniform, so the `k`-th draw of a
//! stream is the same whatever distribution it feeds.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::Distribution;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable derivation of a child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut s = seed ^ h.rotate_left(17);
    splitmix64(&mut s) ^ splitmix64(&mut s).rotate_left(29)
}

#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream_id);
        RandomStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A new stream with the same id and a key derived from `label`.
    pub fn fork(&self, label: &str) -> RandomStream {
        RandomStream::new(derive_seed(self.seed, label), self.stream_id)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_draw(&mut self, d: &Distribution) -> f64 {
        d.quantile(self.next_uniform())
    }

    pub fn next_std_normal(&mut self) -> f64 {
        crate::dist::std_normal_quantile(self.next_uniform())
    }

    /// Integer in `0..n` (n > 0), by rejection so that it is unbiased.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }
}

/// `n` draws from `d` on the given stream.
pub fn sample(d: &Distribution, stream: &mut RandomStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| stream.next_draw(d)).collect()
}
