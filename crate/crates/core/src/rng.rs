//! Seeded random streams keyed by purpose and counters.
//!
//! Every random draw in training and evaluation comes from a stream derived
//! from `(seed, tag, a, b)`, so results do not depend on evaluation order or
//! thread scheduling and a resumed run sees the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn stream(seed: u64, tag: &str, a: u64, b: u64) -> StreamRng {
    let mut key = [0u8; 32];
    let mut state = splitmix(seed ^ splitmix(tag_hash(tag)));
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        let mix = match i {
            0 => state,
            1 => splitmix(state ^ a),
            2 => splitmix(state ^ b.rotate_left(17)),
            _ => splitmix(state ^ a.rotate_left(29) ^ b),
        };
        chunk.copy_from_slice(&mix.to_le_bytes());
        state = splitmix(state);
    }
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let x: u64 = stream(1, "a", 2, 3).random();
        assert_eq!(x, stream(1, "a", 2, 3).random::<u64>());
        assert_ne!(x, stream(1, "a", 3, 2).random::<u64>());
        assert_ne!(x, stream(1, "b", 2, 3).random::<u64>());
        assert_ne!(x, stream(2, "a", 2, 3).random::<u64>());
    }
}
