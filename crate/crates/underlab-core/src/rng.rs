//! Deterministic RNG stream splitting.
//!
//! Splitting rule: the 32-byte ChaCha8 seed is `SHA-256(master_le || tag || index_le)`.
//! Every stochastic unit in the workspace (a replicate, an ensemble member, a
//! permutation draw) names its stream with a module tag and a unit index, so
//! streams never collide and never depend on execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive the RNG stream for `(master seed, module tag, unit index)`.
pub fn derive_rng(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Pack a (cell, replicate) pair into a single unit index.
///
/// Cells are sweep grid points; replicates are realizations within a cell.
/// 2^32 of each is far beyond anything this crate sweeps.
pub fn unit_index(cell: usize, replicate: usize) -> u64 {
    ((cell as u64) << 32) | replicate as u64
}
