//! Seeded hashing: mixing, pairwise-independent tuple hashes, checksums, LSH.

pub mod lsh;
pub mod mix;
pub mod pairwise;

pub use lsh::{
    collision_estimate, draw_lsh, pstable_collision_probability, LshFunction, LshKind,
    MlshFamilySpec, MlshGuarantee,
};
pub use mix::{derive_path, derive_seed, hash_words, mix64};
pub use pairwise::{checksum, key_combine, Checksum, PairwiseHash, PrefixAccumulator};
