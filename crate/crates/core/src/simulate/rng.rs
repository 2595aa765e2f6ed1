//! Deterministic splittable random streams for the simulation harness.
//!
//! Every stream is a ChaCha8 generator keyed by hashing a root seed together
//! with a list of domain tags (config-level draws tag what they are for;
//! replicate-level draws tag the replicate index). Streams are therefore
//! independent of execution order and thread count: replicate k's noise is
//! the same whether replicates run serially or in parallel. Samplers are
//! hand-rolled on top of the raw 64-bit output so the exact sampling
//! algorithm is pinned by this crate, not by a dependency's implementation
//! details: uniforms take the top 53 bits, Gaussians use the Marsaglia polar
//! method, exponentials use inversion.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer: a bijective mixer with good avalanche behavior.
fn splitmix64(z: u64) -> u64 {
    let z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a ChaCha8 key from `(seed, tags)` and wrap it in a sampler.
/// Distinct tag lists give statistically independent streams.
pub(crate) fn stream(seed: u64, tags: &[u64]) -> Sampler {
    let mut state = splitmix64(seed);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        state = splitmix64(state.wrapping_add(i as u64 + 1));
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    Sampler {
        rng: ChaCha8Rng::from_seed(key),
        spare_normal: None,
    }
}

/// Tag constants naming the purpose of each derived stream.
pub(crate) mod tag {
    pub const SIGNAL: u64 = 1;
    pub const NOISE_SCALE: u64 = 2;
    pub const REPLICATE: u64 = 3;
}

pub(crate) struct Sampler {
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Sampler {
    /// Uniform on [0, 1), 53 random bits.
    pub fn uniform01(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by the Marsaglia polar method; pairs are generated
    /// together and the spare is cached.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(x) = self.spare_normal.take() {
            return x;
        }
        loop {
            let u = 2.0 * self.uniform01() - 1.0;
            let v = 2.0 * self.uniform01() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * f);
                return u * f;
            }
        }
    }

    /// Unit-rate exponential by inversion.
    pub fn exponential(&mut self) -> f64 {
        -(1.0 - self.uniform01()).ln()
    }

    /// One row of a flat Dirichlet(1, ..., 1): normalized iid exponentials.
    pub fn dirichlet_row(&mut self, r: usize) -> Vec<f64> {
        let mut row: Vec<f64> = (0..r).map(|_| self.exponential()).collect();
        let total: f64 = row.iter().sum();
        for x in &mut row {
            *x /= total;
        }
        row
    }
}
