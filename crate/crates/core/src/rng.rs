use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream identified by `(master, axis, index)`.
///
/// Each component is folded in through one SplitMix64 round so that neighbouring indices give
/// unrelated streams.
pub fn stream_seed(master: u64, axis: u64, index: u64) -> u64 {
    mix64(mix64(mix64(master) ^ axis) ^ index)
}

pub fn stream(master: u64, axis: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, axis, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_value() {
        // first output of SplitMix64 seeded with 0
        assert_eq!(mix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn streams_differ() {
        assert_ne!(stream_seed(1, 0, 0), stream_seed(1, 0, 1));
        assert_ne!(stream_seed(1, 0, 1), stream_seed(1, 1, 0));
        assert_eq!(stream_seed(7, 3, 9), stream_seed(7, 3, 9));
    }
}
