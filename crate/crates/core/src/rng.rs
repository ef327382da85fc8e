//! Seeded random streams and deterministic parallel sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SimRng = ChaCha8Rng;

/// Independent generator `stream` derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Number of work blocks used by [`par_blocks`]; fixed so that results do
/// not depend on the size of the thread pool.
pub const BLOCKS: usize = 64;

/// Splits `n` draws into [`BLOCKS`] blocks, runs `f(rng, count)` on each in
/// parallel with its own stream, and returns the results in block order.
pub fn par_blocks<T, F>(n: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut SimRng, usize) -> T + Sync,
{
    let blocks = BLOCKS.min(n.max(1));
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let count = n / blocks + usize::from(b < n % blocks);
            let mut rng = stream_rng(seed, b as u64);
            f(&mut rng, count)
        })
        .collect()
}
