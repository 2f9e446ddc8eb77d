//! Small numeric and RNG helpers shared by the algorithm modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer; derives independent child seeds from a parent seed and a salt.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `log_base(x)` for `base > 1`.
pub(crate) fn log_base(x: f64, base: f64) -> f64 {
    libm::log(x) / libm::log(base)
}

/// Absolute slack used when comparing oracle values against thresholds.
pub(crate) const EPS_CMP: f64 = 1e-9;
