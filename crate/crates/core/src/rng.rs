//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] keyed by a
//! 64-bit seed. ChaCha is a counter-based generator whose output is specified
//! bit-for-bit, so datasets, partitions and replications reproduce across
//! platforms. Independent streams are derived with [`mix_seed`], a SplitMix64
//! finalizer applied to `seed ^ mix(stream)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream labels used when deriving sub-seeds.
pub mod streams {
    pub const DESIGN: u64 = 0x6465_7369_676e;
    pub const RESPONSE: u64 = 0x7265_7370;
    pub const FIXED_PLAN: u64 = 0x6669_7865_64;
    pub const SAMPLED_PLAN: u64 = 0x7361_6d70;
    pub const SHUFFLED_PLAN: u64 = 0x7368_7566;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a base seed with a stream index (an epoch, a replication, a label).
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

pub fn stream(seed: u64, label: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, label))
}

/// Box–Muller standard normal sampler. Draws come in pairs; the second value of
/// each pair is kept for the next call.
#[derive(Debug, Clone)]
pub struct NormalSampler {
    spare: Option<f64>,
}

impl NormalSampler {
    pub fn new() -> Self {
        NormalSampler { spare: None }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] so the logarithm is finite.
        let u1 = 1.0 - rng.random::<f64>();
        let u2 = rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(r * angle.sin());
        r * angle.cos()
    }
}

impl Default for NormalSampler {
    fn default() -> Self {
        Self::new()
    }
}

/// Poisson draw by sequential inversion. Means above 10 are split into
/// independent pieces of at most 10 and summed, which keeps `exp(-mean)` well
/// away from underflow while staying exact in distribution.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    debug_assert!(mean >= 0.0 && mean.is_finite());
    if mean == 0.0 {
        return 0;
    }
    let pieces = (mean / 10.0).ceil().max(1.0) as u64;
    let piece = mean / pieces as f64;
    (0..pieces).map(|_| poisson_inversion(rng, piece)).sum()
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let u = rng.random::<f64>();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        let next = cdf + p;
        if next == cdf {
            break;
        }
        cdf = next;
    }
    k
}
