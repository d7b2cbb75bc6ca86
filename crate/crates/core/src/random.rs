//! Seeding discipline and the few random draws shared by every module.
//!
//! All randomness flows from a master seed through [`derive_seed`], so any
//! (drop, position, trial) can be regenerated on its own and parallel runs
//! produce the same bytes as serial ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numerics::C64;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `index` under `parent`. Stable across platforms and releases.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Named sub-streams so that, e.g., pilot and data draws never overlap.
pub mod stream {
    pub const GEOMETRY: u64 = 0x6765_6f6d;
    pub const RECEPTION: u64 = 0x7263_7074;
    pub const SUBSET: u64 = 0x7375_6273;
    pub const TRAIN: u64 = 0x7472_6e67;
    pub const TRIAL: u64 = 0x7472_6961;
}

/// One draw from CN(0, variance): real and imaginary parts each carry
/// `variance / 2`, so `E|n|^2 = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

pub fn complex_gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, variance: f64) -> Vec<C64> {
    (0..n).map(|_| complex_gaussian(rng, variance)).collect()
}
