//! Deterministic seed derivation for independent RNG streams.
//!
//! Experiments fan out into many stochastic components (per-repetition
//! chains, per-iteration candidate draws, kernel-mean samples). Deriving
//! sub-seeds from a master seed with a fixed mixing function keeps every
//! stream reproducible and decoupled from execution order.

/// SplitMix64 finalizer; good avalanche properties for seed mixing.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed from `master` for the stream named by
/// `tag` at position `index`.
pub fn derive(master: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325; // FNV-1a offset basis
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    splitmix64(master ^ splitmix64(h ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_tags_and_indices_give_distinct_seeds() {
        let a = derive(7, "chain", 0);
        let b = derive(7, "chain", 1);
        let c = derive(7, "candidates", 0);
        let d = derive(8, "chain", 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        // stable across calls
        assert_eq!(a, derive(7, "chain", 0));
    }
}
