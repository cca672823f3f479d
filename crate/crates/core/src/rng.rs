//! Named, independent random streams derived from one master seed.
//!
//! Every consumer of randomness asks for a stream keyed by `(kind, a, b)`
//! (for example `(Batching, round, client)`). Streams are ChaCha8 instances
//! whose 256-bit key is a SplitMix64 expansion of the key tuple, so the bytes
//! a client sees never depend on which thread ran it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tag of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamKind {
    DataGen = 1,
    Sampling = 2,
    Batching = 3,
    Harness = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    master: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, kind: StreamKind, a: u64, b: u64) -> ChaCha8Rng {
        let mut state = self.master;
        for word in [kind as u64, a, b] {
            state = splitmix64(&mut state) ^ word;
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}
