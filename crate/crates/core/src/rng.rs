//! Seeded, partitionable random streams.
//!
//! Every sampling task is driven by an [`RngStream`]: a 64-bit key that can be
//! forked into independent child keys by label. Bulk sampling is cut into
//! fixed-size batches and batch `i` always draws from ChaCha stream `i` of the
//! key, so results do not depend on how many worker threads run the batches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// The generator used everywhere in the toolkit.
pub type SeededGenerator = ChaCha8Rng;

/// Number of draws per parallel batch.
pub const BATCH_SIZE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    key: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { key: seed }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Child stream identified by `label`; distinct labels give unrelated keys.
    pub fn fork(&self, label: u64) -> Self {
        Self {
            key: splitmix64(self.key ^ splitmix64(label.wrapping_add(0x5851_f42d_4c95_7f2d))),
        }
    }

    /// Generator for sequential use of this stream.
    pub fn generator(&self) -> SeededGenerator {
        SeededGenerator::seed_from_u64(self.key)
    }

    /// Generator for batch `index` of this stream.
    pub fn batch_generator(&self, index: u64) -> SeededGenerator {
        let mut rng = SeededGenerator::seed_from_u64(self.key);
        rng.set_stream(index);
        rng
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Runs `work(rng, len)` over `count` draws split into [`BATCH_SIZE`] batches,
/// in parallel, returning per-batch outputs in batch order.
pub fn par_batches<T, F>(stream: RngStream, count: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut SeededGenerator, usize) -> T + Sync,
{
    let batches = count.div_ceil(BATCH_SIZE);
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let len = BATCH_SIZE.min(count - b * BATCH_SIZE);
            let mut rng = stream.batch_generator(b as u64);
            work(&mut rng, len)
        })
        .collect()
}
