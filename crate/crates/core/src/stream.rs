//! Deterministic random streams for parallel Monte Carlo.
//!
//! Every stream is addressed by a master seed plus a [`StreamId`]. The seed,
//! purpose, replica and slot are packed verbatim into the 256-bit ChaCha key
//! and the path index selects the ChaCha stream, so two different ids can
//! never share a stream. Work can be split across any number of workers
//! without changing what each path sees.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc_inv;

/// What a stream is used for. Diffusion and chain randomness never share a
/// stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Diffusion = 1,
    Chain = 2,
    ChainInit = 3,
    /// Chain paths sampled once and then held fixed (quenched runs).
    FixedChain = 4,
}

/// Address of a stream below a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub purpose: Purpose,
    pub replica: u64,
    pub slot: u64,
    pub path: u64,
}

impl StreamId {
    pub fn new(purpose: Purpose) -> Self {
        Self { purpose, replica: 0, slot: 0, path: 0 }
    }

    pub fn replica(mut self, replica: u64) -> Self {
        self.replica = replica;
        self
    }

    pub fn slot(mut self, slot: u64) -> Self {
        self.slot = slot;
        self
    }

    pub fn path(mut self, path: u64) -> Self {
        self.path = path;
        self
    }
}

/// A random stream with the draws the simulators need.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
}

/// Builds the stream for `(seed, id)`.
pub fn derive_stream(seed: u64, id: StreamId) -> Stream {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(id.purpose as u64).to_le_bytes());
    key[16..24].copy_from_slice(&id.replica.to_le_bytes());
    key[24..32].copy_from_slice(&id.slot.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(id.path);
    Stream { rng }
}

const INV_2_53: f64 = 1.0 / 9_007_199_254_740_992.0;

impl Stream {
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn open01(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * INV_2_53
    }

    /// Standard normal by inverse CDF.
    #[inline]
    pub fn gaussian(&mut self) -> f64 {
        inverse_normal_cdf(self.open01())
    }

    /// Exponential with the given rate; infinite when the rate is zero.
    #[inline]
    pub fn exponential(&mut self, rate: f64) -> f64 {
        if rate <= 0.0 {
            return f64::INFINITY;
        }
        -self.open01().ln() / rate
    }

    /// Index drawn with probability proportional to `weights`.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let target = self.open01() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            last = i;
            acc += w;
            if target < acc {
                return i;
            }
        }
        last
    }
}

/// Quantile function of the standard normal distribution.
#[inline]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}
