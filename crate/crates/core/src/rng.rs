//! Reproducible random sub-streams.
//!
//! Every random draw made by the engine comes from a stream keyed by
//! `(seed, perturbation index, role)`, so results never depend on how many
//! worker threads evaluate likelihoods.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a sub-stream is used for inside one perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    InitMain = 1,
    InitAux = 2,
    MainSupport = 3,
    AuxSupport = 4,
    StudentT = 5,
    Pool = 6,
    Partition = 7,
    Data = 8,
    Truth = 9,
}

/// Sub-stream for perturbation `p` and the given role.
pub fn substream(seed: u64, p: u64, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((p << 8) | role as u64);
    rng
}
