//! Public verification: anyone holding the system parameters (and so `psk`)
//! can challenge the server and check its answer.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_bigint::BigUint;
use rand_core::RngCore;

use crate::arith;
use crate::block::Block;
use crate::error::{Error, Result};
use crate::homhash::{hash_block, HashValue};
use crate::params::SystemParams;
use crate::protocol::{AuditProof, Challenge, ChallengeEntry, CounterStatement, Request, Response, ServerLink};
use crate::schedule;
use crate::sigtag::check_tag;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditOutcome {
    pub passed: bool,
    /// Nothing was challenged, so passing says nothing.
    pub vacuous: bool,
    pub reason: Option<String>,
}

impl AuditOutcome {
    fn pass(vacuous: bool) -> Self {
        AuditOutcome { passed: true, vacuous, reason: None }
    }

    fn fail(reason: impl Into<String>) -> Self {
        AuditOutcome { passed: false, vacuous: false, reason: Some(reason.into()) }
    }
}

/// Coefficient ν uniform in [1, q).
pub fn random_coefficient<R: RngCore + ?Sized>(params: &SystemParams, rng: &mut R) -> BigUint {
    arith::random_range(rng, &BigUint::from(1u32), &params.q)
}

/// `c` entries per occupied level and `c` from C, at the time given by a
/// verified counter statement.
pub fn gen_challenge<R: RngCore + ?Sized>(
    params: &SystemParams,
    statement: &CounterStatement,
    c: usize,
    rng: &mut R,
) -> Result<Challenge> {
    if !statement.verify(params) {
        return Err(Error::verification("counter statement does not verify"));
    }
    let addrs = schedule::audit_addresses(params.n, statement.counter, c, rng)?;
    let entries = addrs.into_iter().map(|addr| ChallengeEntry { nu: random_coefficient(params, rng), addr }).collect();
    Ok(Challenge { counter: statement.counter, entries })
}

/// Checks every tag at its (address, epoch) and h(B*) = ∏ h_i^{ν_i}.
pub fn verify_proof(params: &SystemParams, challenge: &Challenge, proof: &AuditProof) -> AuditOutcome {
    if proof.counter != challenge.counter {
        return AuditOutcome::fail(format!("proof is for counter {}, challenge for {}", proof.counter, challenge.counter));
    }
    if proof.tags.len() != challenge.entries.len() {
        return AuditOutcome::fail("tag count differs from the challenge size");
    }
    if !proof.bstar.is_valid(params) {
        return AuditOutcome::fail("B* is malformed");
    }
    let mut hstar = HashValue::identity();
    for (entry, tag) in challenge.entries.iter().zip(&proof.tags) {
        if entry.nu == BigUint::from(0u32) || entry.nu >= params.q {
            return AuditOutcome::fail("coefficient outside [1, q)");
        }
        let epoch = match schedule::slot_epoch(&entry.addr, params.n, challenge.counter) {
            Ok(e) => e,
            Err(e) => return AuditOutcome::fail(format!("{:?} is not auditable: {e}", entry.addr)),
        };
        if !tag.hash.is_valid(params) || !check_tag(params, tag, &entry.addr, epoch) {
            return AuditOutcome::fail(format!("tag at {:?} fails at epoch {epoch}", entry.addr));
        }
        hstar = HashValue(arith::mul_mod(&hstar.0, &tag.hash.0.modpow(&entry.nu, &params.p), &params.p));
    }
    if hash_block(params, &proof.bstar) != hstar {
        return AuditOutcome::fail("h(B*) differs from the combined tag hashes");
    }
    AuditOutcome::pass(challenge.entries.is_empty())
}

/// One audit round trip. A server error counts as a failed audit; only
/// transport failures surface as `Err`.
pub fn audit<L: ServerLink, R: RngCore + ?Sized>(
    params: &SystemParams,
    statement: &CounterStatement,
    c: usize,
    link: &mut L,
    rng: &mut R,
) -> Result<AuditOutcome> {
    let challenge = gen_challenge(params, statement, c, rng)?;
    Ok(match link.call(&Request::Audit(challenge.clone()))? {
        Response::AuditProof(proof) => verify_proof(params, &challenge, &proof),
        Response::Error(msg) => AuditOutcome::fail(format!("server error: {msg}")),
        other => AuditOutcome::fail(format!("unexpected response type {:#04x}", other.frame_type())),
    })
}

/// Σ ν_i·B_i, as an honest server computes it.
pub fn combine_blocks(params: &SystemParams, entries: &[(BigUint, Block)]) -> Block {
    let module = crate::linalg::Blocks { q: &params.q, m: params.m() };
    let (coeffs, blocks): (Vec<BigUint>, Vec<Block>) = entries.iter().cloned().unzip();
    crate::linalg::combination(&module, &coeffs, &blocks)
}
