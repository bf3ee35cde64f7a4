// SPDX-License-Identifier: Apache-2.0

//! Counter-based random substreams.
//!
//! Every (seed, sweep point, shot) triple maps to its own ChaCha8 key, so
//! a shot's randomness does not depend on which thread runs it or in what
//! order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, point: u64, shot: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut h = splitmix(seed);
    h = splitmix(h ^ point);
    h = splitmix(h ^ shot.rotate_left(17));
    for chunk in key.chunks_exact_mut(8) {
        h = splitmix(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
