//! Seeded, platform-stable hashing used for every retention and split decision.
//!
//! Decisions keyed on a hash of the record (instead of a shuffled order) are
//! reproducible across shards and independent of input order.

use xxhash_rust::xxh3::xxh3_64_with_seed;

const FIELD_SEP: u8 = 0x1f;

/// 64-bit XXH3 hash of `parts` joined by the ASCII unit separator.
pub fn seeded_hash(seed: u64, parts: &[&str]) -> u64 {
    let mut buf = Vec::with_capacity(parts.iter().map(|p| p.len() + 1).sum());
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            buf.push(FIELD_SEP);
        }
        buf.extend_from_slice(p.as_bytes());
    }
    xxh3_64_with_seed(&buf, seed)
}
