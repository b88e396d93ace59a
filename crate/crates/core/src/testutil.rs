//! Shared fixtures for unit tests.

use alloc::vec;

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::params::{assemble, setup, Profile, SecretState, SetupLimits, SystemParams};
use crate::sigtag::{SigScheme, SignatureScheme};

/// p = 103, q = 17, g = 64, γ = [2, 3], ω = 2, n = 4, m = 2.
pub fn tiny() -> (SystemParams, SecretState) {
    let mut rng = ChaCha20Rng::seed_from_u64(103);
    let (psk, ssk) = SigScheme::Ed25519.keygen(&mut rng);
    assemble(
        Profile { lambda: 2, lambda_p: 7, lambda_q: 5 },
        BigUint::from(103u32),
        BigUint::from(17u32),
        BigUint::from(64u32),
        vec![BigUint::from(2u32), BigUint::from(3u32)],
        BigUint::from(2u32),
        4,
        [7u8; 16],
        SigScheme::Ed25519,
        psk,
        ssk,
    )
}

/// Freshly generated toy-profile parameters; deterministic per (n, m).
pub fn toy(n: u64, m: usize) -> (SystemParams, SecretState) {
    let mut rng = ChaCha20Rng::seed_from_u64(n * 1000 + m as u64);
    setup(&mut rng, Profile::TOY, n, m, SigScheme::Ed25519, SetupLimits::default()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
