use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-streams of the counter-based generator. Each stream is an
/// independent ChaCha keystream for the same seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Brownian = 1,
    JumpCount = 2,
    JumpTimes = 3,
    Marks = 4,
    Auxiliaries = 5,
    /// Bridge values at jump times inserted into the base lattice.
    Bridge = 6,
    /// Bridge values for grid refinement.
    Refine = 7,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Mix `seed` and `tag` into a new seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
