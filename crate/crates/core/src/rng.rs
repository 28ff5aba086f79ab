//! Path-addressed random streams.
//!
//! A stream is identified by a master seed and a path of integers (for a
//! sweep: family, cell, replicate, projection). The path is hashed into a
//! ChaCha key, so a stream's draws depend only on its address, never on which
//! worker runs it or in what order sibling tasks execute.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key_for(master_seed: u64, path: &[u64]) -> [u8; 32] {
    let mut h = splitmix(master_seed ^ GOLDEN);
    h = splitmix(h ^ (path.len() as u64).wrapping_mul(GOLDEN));
    for &step in path {
        h = splitmix(h.wrapping_add(GOLDEN) ^ splitmix(step.wrapping_add(1)));
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        let word = splitmix(h.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN)));
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    key
}

/// A deterministic random stream addressed by `(master_seed, path)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    path: Vec<u64>,
    rng: ChaCha12Rng,
}

/// Creates the stream at `path` under `master_seed`.
pub fn derive_stream(master_seed: u64, path: &[u64]) -> RngStream {
    RngStream { master_seed, path: path.to_vec(), rng: ChaCha12Rng::from_seed(key_for(master_seed, path)) }
}

impl RngStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// The child stream at `path ++ [index]`. Independent of how many values
    /// have already been drawn from `self`.
    pub fn fork(&self, index: u64) -> RngStream {
        let mut path = self.path.clone();
        path.push(index);
        derive_stream(self.master_seed, &path)
    }

    /// Child stream at `path ++ indices`.
    pub fn fork_path(&self, indices: &[u64]) -> RngStream {
        let mut path = self.path.clone();
        path.extend_from_slice(indices);
        derive_stream(self.master_seed, &path)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
