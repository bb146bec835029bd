//! Counter-based random substreams.
//!
//! Every random draw in the engine comes from a stream addressed by
//! `(seed, purpose, path index, grid index)`. The address is hashed into a
//! ChaCha8 key and the final index selects the ChaCha stream, so a given
//! path sees the same numbers no matter how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. Part of the stream address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Terminal = 1,
    Path = 2,
    Density = 3,
    Inner = 4,
    Training = 5,
    Diagnostics = 6,
}

/// A family of independent substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Streams {
    key: u64,
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(words: &[u64]) -> u64 {
    let mut state = 0x6A09_E667_F3BC_C908u64;
    let mut acc = 0u64;
    for &w in words {
        state ^= w;
        acc = splitmix64(&mut state) ^ acc.rotate_left(17);
    }
    acc
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Streams { key: mix(&[seed, 0]) }
    }

    /// Derive a child family for `(purpose, a, b)`, e.g. `(Inner, path, grid)`.
    pub fn child(&self, purpose: Purpose, a: u64, b: u64) -> Self {
        Streams {
            key: mix(&[self.key, purpose as u64, a, b]),
        }
    }

    /// The generator for substream `index` of this family.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut state = self.key;
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(index);
        rng
    }

    /// Shorthand for `child(purpose, 0, 0).rng(index)`.
    pub fn stream(&self, purpose: Purpose, index: u64) -> ChaCha8Rng {
        self.child(purpose, 0, 0).rng(index)
    }
}
