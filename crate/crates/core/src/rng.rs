//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose of a random stream. Streams with different purposes never share
/// state, so adding battery noise cannot shift the wind or load draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    WindMinutes = 1,
    WindSeconds = 2,
    LoadMinutes = 3,
    LoadSeconds = 4,
    DispatchError = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `stream` at `bus`, derived from the master seed.
pub fn derive_seed(master: u64, stream: Stream, bus: u32) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ (stream as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ u64::from(bus))
}

pub fn stream_rng(master: u64, stream: Stream, bus: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, bus))
}
