//! Counter-based, splittable random streams.
//!
//! A [`RandomStream`] is just `(seed, path)`. The ChaCha key for a stream is
//! a hash of both, so any substream can be materialised directly from its
//! indices without advancing a parent generator. Results therefore do not
//! depend on how packets are scheduled across workers.

use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numerics::Complex;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RandomStream {
    seed: u64,
    path: Vec<u64>,
}

impl RandomStream {
    pub fn root(seed: u64) -> Self {
        Self { seed, path: Vec::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Child stream at `index`; a pure function of `(seed, path, index)`.
    pub fn substream(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self { seed: self.seed, path }
    }

    pub fn rng(&self) -> StreamRng {
        let mut state = splitmix64(self.seed ^ 0x6d6d_696d_6f5f_7273);
        // length-prefix so [a] and [a, 0] differ
        state = splitmix64(state ^ self.path.len() as u64);
        for &p in &self.path {
            state = splitmix64(state ^ splitmix64(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        StreamRng { inner: ChaCha8Rng::from_seed(key) }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one stream, with the draws the simulator needs.
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Circularly-symmetric complex Gaussian with unit total variance.
    pub fn complex_normal(&mut self) -> Complex {
        let re: f64 = StandardNormal.sample(&mut self.inner);
        let im: f64 = StandardNormal.sample(&mut self.inner);
        Complex::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
    }

    pub fn fill_complex_normal(&mut self, out: &mut [Complex]) {
        out.iter_mut().for_each(|z| *z = self.complex_normal());
    }

    /// Uniform bits, one per byte (values 0 or 1).
    pub fn bits(&mut self, n: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let word = self.inner.next_u64();
            let take = (n - out.len()).min(64);
            out.extend((0..take).map(|b| ((word >> b) & 1) as u8));
        }
        out
    }
}
