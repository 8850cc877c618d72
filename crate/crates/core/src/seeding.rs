//! Counter-based random streams.
//!
//! A stream is identified by `(master seed, domain, index)`: the master seed
//! and a domain tag are mixed into a ChaCha key, and the index selects the
//! ChaCha stream. Work item `i` always reads stream `i`, so results do not
//! depend on how items are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for work item `index` within `domain`.
pub fn stream_rng(master: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix64(master ^ splitmix64(domain));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Domain tag for a real-valued parameter such as a horizon.
pub fn domain_of(tag: &str, value: f64) -> u64 {
    let mut h = splitmix64(value.to_bits());
    for b in tag.bytes() {
        h = splitmix64(h ^ b as u64);
    }
    h
}
