//! Keyed random streams.
//!
//! Every stochastic step draws from a stream derived from the master seed and
//! a tuple of integer keys (category, fold, round, ...), so results do not
//! depend on the order in which parallel work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit seed from a master seed and a list of keys.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(seed: u64, keys: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, keys))
}

/// Stable hash of a string under a seed; used to assign speakers to folds
/// independently of their position in a file.
pub fn hash_str(seed: u64, s: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(s.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest has 32 bytes"))
}

/// Partition items into `k` folds: items are ranked by their keyed hash and
/// dealt round-robin, so fold sizes differ by at most one.
pub fn hashed_folds<S: AsRef<str>>(seed: u64, ids: &[S], k: usize) -> Vec<usize> {
    let mut order: Vec<(u64, &str, usize)> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (hash_str(seed, id.as_ref()), id.as_ref(), i))
        .collect();
    order.sort_unstable();
    let mut folds = vec![0; ids.len()];
    for (rank, &(_, _, i)) in order.iter().enumerate() {
        folds[i] = rank % k;
    }
    folds
}
