//! Seeded, splittable randomness: every random draw in the crate flows
//! through a `ChaCha8Rng` derived from a master seed and a stream index,
//! so results are reproducible for any worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream `stream` of the generator family seeded by `master`.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&stream.to_le_bytes());
    // distinguish the family from a bare master-seeded generator
    seed[16..24].copy_from_slice(&0x6b61_6c67_7374_726du64.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}
