//! Seeded randomness. Every stochastic step draws from ChaCha8 streams keyed
//! by `(seed, label)`, and the shuffling/sampling algorithms are spelled out
//! here so results do not depend on library-internal choices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// FNV-1a, used only to turn labels into stream offsets.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Independent generator for `label` under `seed`.
pub fn stream(seed: u64, label: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(label.as_bytes()));
    rng
}

/// Uniform index in `0..n`. Panics when `n == 0`.
pub fn index(rng: &mut StreamRng, n: usize) -> usize {
    rng.random_range(0..n as u64) as usize
}

/// Fisher-Yates, walking from the back.
pub fn shuffle<T>(rng: &mut StreamRng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}

/// `k` distinct elements of `items` (partial Fisher-Yates over a copy),
/// in draw order.
pub fn sample<T: Clone>(rng: &mut StreamRng, items: &[T], k: usize) -> Vec<T> {
    assert!(k <= items.len(), "cannot draw {k} of {}", items.len());
    let mut pool: Vec<T> = items.to_vec();
    for i in 0..k {
        let j = i + index(rng, pool.len() - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}
