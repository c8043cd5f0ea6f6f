//! Fixed strong 64-bit mixing used for seed derivation and canonical ids.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a bijective avalanche mix.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a parent seed and a stream id.
#[inline]
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(mix64(seed ^ GOLDEN).wrapping_add(stream.wrapping_mul(GOLDEN)) ^ 0xD6E8_FEB8_6659_FD93)
}

/// Derives a child seed along a path of stream ids.
pub fn derive_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &p| derive_seed(s, p))
}

/// Seeded strong hash of a word sequence; length is mixed in so prefixes differ.
pub fn hash_words(seed: u64, words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h = mix64(seed ^ 0x2545_F491_4F6C_DD1D);
    let mut len = 0u64;
    for w in words {
        h = mix64(h ^ mix64(w.wrapping_add(GOLDEN)));
        h = h.wrapping_mul(GOLDEN).rotate_left(29);
        len += 1;
    }
    mix64(h ^ len.wrapping_mul(0xA24B_AED4_963E_E407))
}

/// Domain tags for seed streams so protocol phases never share randomness.
pub mod stream {
    pub const LSH_DRAW: u64 = 1;
    pub const KEY_HASH: u64 = 2;
    pub const CHECKSUM: u64 = 3;
    pub const TABLE: u64 = 4;
    pub const GAP_ENTRY: u64 = 5;
    pub const SIGNATURE: u64 = 6;
    pub const INTERVAL: u64 = 7;
    pub const TRIAL: u64 = 8;
    pub const BOB_PRIVATE: u64 = 9;
}
