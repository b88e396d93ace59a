//! System parameters and key material. Storage addresses live here too.

use alloc::vec::Vec;

use num_bigint::BigUint;
use num_traits::{One, Zero};
#[cfg(feature = "client")]
use rand_core::CryptoRng;
use rand_core::RngCore;

use crate::arith::{self, is_probable_prime};
#[cfg(feature = "client")]
use crate::arith::{random_bits, random_range};
use crate::error::{Error, Result};
use crate::sigtag::SigScheme;
#[cfg(feature = "client")]
use crate::sigtag::SignatureScheme;

/// Miller-Rabin rounds used during parameter search.
const MR_ROUNDS: u32 = 40;

/// Bit lengths that determine the algebraic setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Profile {
    pub lambda: u32,
    pub lambda_p: u32,
    pub lambda_q: u32,
}

impl Profile {
    /// λ = 128, |p| = 1024, |q| = 257.
    pub const PAPER: Profile = Profile { lambda: 128, lambda_p: 1024, lambda_q: 257 };
    /// Desk-scale profile: 33-bit q (32-bit segments), 64-bit p.
    pub const TOY: Profile = Profile { lambda: 16, lambda_p: 64, lambda_q: 33 };

    pub fn by_name(name: &str) -> Option<Profile> {
        match name {
            "paper" => Some(Self::PAPER),
            "toy" => Some(Self::TOY),
            _ => None,
        }
    }

    /// |q| = 2λ + 1 with |p| comfortably above |q|.
    pub fn from_lambda(lambda: u32, lambda_p: u32) -> Profile {
        Profile { lambda, lambda_p, lambda_q: 2 * lambda + 1 }
    }
}

/// Public parameters. Everything here may be handed to the server and to auditors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemParams {
    pub lambda: u32,
    pub lambda_p: u32,
    pub lambda_q: u32,
    pub p: BigUint,
    pub q: BigUint,
    pub generators: Vec<BigUint>,
    /// Primitive 2n-th root of unity modulo q.
    pub omega: BigUint,
    /// File capacity in blocks.
    pub n: u64,
    pub fid: [u8; 16],
    pub sig_scheme: SigScheme,
    pub psk: Vec<u8>,
}

/// Client-only key material.
#[cfg(feature = "client")]
#[derive(Clone, PartialEq, Eq)]
pub struct SecretState {
    pub ssk: Vec<u8>,
    pub g: BigUint,
    pub gamma: Vec<BigUint>,
}

#[cfg(feature = "client")]
impl core::fmt::Debug for SecretState {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SecretState").field("m", &self.gamma.len()).finish_non_exhaustive()
    }
}

impl SystemParams {
    pub fn m(&self) -> usize {
        self.generators.len()
    }

    pub fn log_n(&self) -> u32 {
        self.n.trailing_zeros()
    }

    /// Payload bits per segment (λ_q − 1).
    pub fn segment_bits(&self) -> u32 {
        self.lambda_q - 1
    }

    /// Byte width of one segment field on the wire.
    pub fn segment_width(&self) -> usize {
        self.lambda_q.div_ceil(8) as usize
    }

    /// Raw bytes a block can carry.
    pub fn block_bytes(&self) -> usize {
        (self.m() as u64 * self.segment_bits() as u64 / 8) as usize
    }

    /// β: payload bits per block.
    pub fn beta_bits(&self) -> u64 {
        self.m() as u64 * self.segment_bits() as u64
    }

    /// Checks every structural invariant of the public parameters.
    pub fn validate<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<()> {
        if !arith::is_power_of_two(self.n) {
            return Err(Error::NotPowerOfTwo(self.n));
        }
        if self.generators.is_empty() {
            return Err(Error::InvalidParams("m must be at least 1"));
        }
        if self.lambda_q < 3 || self.q.bits() != self.lambda_q as u64 {
            return Err(Error::InvalidParams("|q| differs from lambda_q"));
        }
        if self.p.bits() != self.lambda_p as u64 {
            return Err(Error::InvalidParams("|p| differs from lambda_p"));
        }
        if !is_probable_prime(&self.q, MR_ROUNDS, rng) || !is_probable_prime(&self.p, MR_ROUNDS, rng) {
            return Err(Error::InvalidParams("p and q must be prime"));
        }
        let one = BigUint::one();
        let p1 = &self.p - &one;
        let q1 = &self.q - &one;
        if !arith::divides(&self.q, &p1) {
            return Err(Error::InvalidParams("q must divide p - 1"));
        }
        let two_n = BigUint::from(2 * self.n);
        if !arith::divides(&two_n, &q1) {
            return Err(Error::InvalidParams("q must be 1 mod 2n"));
        }
        for g in &self.generators {
            if g.is_zero() || g == &one || g >= &self.p || g.modpow(&self.q, &self.p) != one {
                return Err(Error::InvalidParams("generator outside the order-q subgroup"));
            }
        }
        if self.omega.modpow(&two_n, &self.q) != one
            || self.omega.modpow(&BigUint::from(self.n), &self.q) == one
        {
            return Err(Error::InvalidParams("omega is not a primitive 2n-th root of unity"));
        }
        Ok(())
    }
}

/// Builds a parameter set from explicit group elements and exponents.
///
/// Used for fixed test vectors and for reloading secret material; `setup` is the normal entry.
#[cfg(feature = "client")]
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    profile: Profile,
    p: BigUint,
    q: BigUint,
    g: BigUint,
    gamma: Vec<BigUint>,
    omega: BigUint,
    n: u64,
    fid: [u8; 16],
    sig_scheme: SigScheme,
    psk: Vec<u8>,
    ssk: Vec<u8>,
) -> (SystemParams, SecretState) {
    let generators = gamma.iter().map(|gi| g.modpow(gi, &p)).collect();
    let params = SystemParams {
        lambda: profile.lambda,
        lambda_p: profile.lambda_p,
        lambda_q: profile.lambda_q,
        p,
        q,
        generators,
        omega,
        n,
        fid,
        sig_scheme,
        psk,
    };
    (params, SecretState { ssk, g, gamma })
}

/// Retry bounds for the randomized parameter search.
#[derive(Debug, Clone, Copy)]
pub struct SetupLimits {
    pub prime_attempts: u32,
    pub element_attempts: u32,
}

impl Default for SetupLimits {
    fn default() -> Self {
        SetupLimits { prime_attempts: 200_000, element_attempts: 1_000 }
    }
}

/// Generates fresh parameters and client secrets for a file of capacity `n` blocks of `m` segments.
#[cfg(feature = "client")]
pub fn setup<R: RngCore + CryptoRng + ?Sized>(
    rng: &mut R,
    profile: Profile,
    n: u64,
    m: usize,
    sig_scheme: SigScheme,
    limits: SetupLimits,
) -> Result<(SystemParams, SecretState)> {
    if !arith::is_power_of_two(n) {
        return Err(Error::NotPowerOfTwo(n));
    }
    if m == 0 {
        return Err(Error::InvalidParams("m must be at least 1"));
    }
    if profile.lambda < 8 {
        return Err(Error::InvalidParams("lambda must be at least 8"));
    }
    let two_n = BigUint::from(2 * n);
    if profile.lambda_q as u64 <= two_n.bits() + 1 {
        return Err(Error::InvalidParams("lambda_q too small for capacity"));
    }
    if profile.lambda_p <= profile.lambda_q + 1 {
        return Err(Error::InvalidParams("lambda_p must exceed lambda_q"));
    }
    let one = BigUint::one();

    // q = a·2n + 1 with exactly lambda_q bits.
    let q = {
        let a_bits = profile.lambda_q as u64 - (two_n.bits() - 1);
        let mut found = None;
        for _ in 0..limits.prime_attempts {
            let a = random_bits(rng, a_bits);
            let cand = &a * &two_n + &one;
            if cand.bits() == profile.lambda_q as u64 && is_probable_prime(&cand, MR_ROUNDS, rng) {
                found = Some(cand);
                break;
            }
        }
        found.ok_or(Error::SetupTimeout(limits.prime_attempts))?
    };

    // p = k·q + 1 with exactly lambda_p bits.
    let p = {
        let k_bits = profile.lambda_p as u64 - q.bits() + 1;
        let mut found = None;
        for _ in 0..limits.prime_attempts {
            let mut k = random_bits(rng, k_bits);
            k.set_bit(0, false);
            let cand = &k * &q + &one;
            if cand.bits() == profile.lambda_p as u64 && is_probable_prime(&cand, MR_ROUNDS, rng) {
                found = Some(cand);
                break;
            }
        }
        found.ok_or(Error::SetupTimeout(limits.prime_attempts))?
    };

    let cofactor = (&p - &one) / &q;
    let two = BigUint::from(2u32);
    let g = (0..limits.element_attempts)
        .map(|_| random_range(rng, &two, &(&p - &one)).modpow(&cofactor, &p))
        .find(|g| g != &one)
        .ok_or(Error::SetupTimeout(limits.element_attempts))?;

    let gamma: Vec<BigUint> = (0..m).map(|_| random_range(rng, &one, &q)).collect();

    let root_exp = (&q - &one) / &two_n;
    let n_big = BigUint::from(n);
    let omega = (0..limits.element_attempts)
        .map(|_| random_range(rng, &two, &q).modpow(&root_exp, &q))
        .find(|w| w.modpow(&n_big, &q) != one)
        .ok_or(Error::SetupTimeout(limits.element_attempts))?;

    let mut fid = [0u8; 16];
    rng.fill_bytes(&mut fid);
    let (psk, ssk) = sig_scheme.keygen(rng);
    let (params, secret) = assemble(profile, p, q, g, gamma, omega, n, fid, sig_scheme, psk, ssk);
    // A generator collision with 1 is impossible since every gamma is nonzero and g has order q.
    debug_assert!(params.generators.iter().all(|gi| gi != &one));
    Ok((params, secret))
}

#[cfg(feature = "client")]
impl SecretState {
    /// `true` iff g_i = g^{γ_i} for every generator.
    pub fn consistent_with(&self, params: &SystemParams) -> bool {
        self.gamma.len() == params.m()
            && self
                .gamma
                .iter()
                .zip(&params.generators)
                .all(|(gi, gen)| &self.g.modpow(gi, &params.p) == gen)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    X,
    Y,
}

/// Physical location of a block (and its tag) on the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Address {
    /// Physical leaf slot of the unencoded buffer.
    U { slot: u64 },
    /// Slot of one side of a hierarchical log level.
    H { level: u32, side: Side, slot: u64 },
    /// Slot of one side of the encoded snapshot buffer.
    C { side: Side, slot: u64 },
}

impl Address {
    pub fn structure_byte(&self) -> u8 {
        match self {
            Address::U { .. } => 0,
            Address::H { .. } => 1,
            Address::C { .. } => 2,
        }
    }

    /// Fixed 11-byte layout: structure, level, side, slot (BE).
    pub fn to_bytes(&self) -> [u8; 11] {
        let (level, side, slot) = match *self {
            Address::U { slot } => (0xFF, 0xFF, slot),
            Address::H { level, side, slot } => (level as u8, side_byte(side), slot),
            Address::C { side, slot } => (0xFF, side_byte(side), slot),
        };
        let mut out = [0u8; 11];
        out[0] = self.structure_byte();
        out[1] = level;
        out[2] = side;
        out[3..].copy_from_slice(&slot.to_be_bytes());
        out
    }

    pub fn from_bytes(b: &[u8; 11]) -> Result<Address> {
        let slot = u64::from_be_bytes(b[3..11].try_into().expect("8 bytes"));
        let side = |x: u8| match x {
            0 => Ok(Side::X),
            1 => Ok(Side::Y),
            _ => Err(Error::Decode("bad side byte")),
        };
        match b[0] {
            0 if b[1] == 0xFF && b[2] == 0xFF => Ok(Address::U { slot }),
            1 if b[1] < 64 => Ok(Address::H { level: b[1] as u32, side: side(b[2])?, slot }),
            2 if b[1] == 0xFF => Ok(Address::C { side: side(b[2])?, slot }),
            _ => Err(Error::Decode("bad address")),
        }
    }

    /// Checks slot bounds against the capacity.
    pub fn in_bounds(&self, n: u64) -> bool {
        match *self {
            Address::U { slot } => slot < n,
            Address::H { level, slot, .. } => level < n.trailing_zeros() && slot < (1u64 << level),
            Address::C { slot, .. } => slot < n,
        }
    }
}

fn side_byte(s: Side) -> u8 {
    match s {
        Side::X => 0,
        Side::Y => 1,
    }
}

/// Counter value at which level `l` was last filled, given the within-cycle write counter `w`.
pub fn epoch_of_level(w: u64, l: u32) -> Result<u64> {
    if l >= 64 || w & (1u64 << l) == 0 {
        return Err(Error::EmptyLevel(l));
    }
    Ok(w & !((1u64 << l) - 1))
}
