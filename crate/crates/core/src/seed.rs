//! Seeded, splittable random streams.
//!
//! Every stochastic component takes a `u64` seed and derives child seeds with
//! [`derive_seed`], so that any item of any dataset can be regenerated in
//! isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate.
pub type Rng = ChaCha8Rng;

/// Identifier of the stream algorithm, recorded in manifests.
pub const RNG_ALGORITHM: &str = "chacha8";

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a named sub-stream of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// A seed that can be split into independent, reproducible child streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream(pub u64);

impl SeedStream {
    pub fn child(self, stream: u64) -> SeedStream {
        SeedStream(derive_seed(self.0, stream))
    }

    pub fn rng(self) -> Rng {
        rng(self.0)
    }
}
