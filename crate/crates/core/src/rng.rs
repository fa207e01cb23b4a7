//! Keyed random streams.
//!
//! Every random draw in the simulator comes from a ChaCha8 stream whose 256-bit key is
//! the tuple `(seed, frame, pair, stream)`. Streams never share state, so any frame or
//! pair can be regenerated in isolation, in any order, on any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which quantity a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Direct = 1,
    UavRis = 2,
    RisUser = 3,
    Placement = 4,
    RandomPhase = 5,
    Training = 6,
    Init = 7,
}

pub fn keyed(seed: u64, frame: u64, pair: u64, stream: Stream) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&frame.to_le_bytes());
    key[16..24].copy_from_slice(&pair.to_le_bytes());
    key[24..].copy_from_slice(&(stream as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
