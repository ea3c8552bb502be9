//! Seed derivation for the named random streams of a run.
//!
//! Every stochastic dimension draws from its own generator so that toggling
//! one (say, traffic mode) leaves the others' draws untouched:
//!
//! ```text
//! stream_seed(master, label) = splitmix64(master ^ fnv1a64(label))
//! replication_seed(master, 0) = master
//! replication_seed(master, i) = splitmix64(master ^ splitmix64(i))   for i > 0
//! ```
//!
//! Streams are ChaCha8 generators seeded with `seed_from_u64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CAPACITY_STREAM: &str = "capacity";
pub const ARRIVAL_STREAM: &str = "arrival";
pub const SUCCESS_STREAM: &str = "success";
pub const ASSIGNMENT_STREAM: &str = "assignment";

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

pub fn stream_seed(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a64(label))
}

pub fn stream(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, label))
}

pub fn replication_seed(master: u64, index: u64) -> u64 {
    if index == 0 {
        master
    } else {
        splitmix64(master ^ splitmix64(index))
    }
}
