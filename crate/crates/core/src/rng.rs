//! Seed derivation.
//!
//! Every random stream in the crate is keyed by a master seed plus a path of
//! integer labels (draw index, replicate index, grid index, ...). Streams for
//! different keys are independent ChaCha instances, so results never depend
//! on the order in which work items run.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive a child seed from `seed` and a path of labels.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(seed), |acc, &k| splitmix(acc ^ splitmix(k.wrapping_add(GOLDEN))))
}

/// Independent generator for the given key path.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let s0 = derive_seed(seed, path);
    let mut bytes = [0u8; 32];
    let mut s = s0;
    for chunk in bytes.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha12Rng::from_seed(bytes)
}

/// Uniform deviate on the open interval (0, 1).
#[inline]
pub fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
