//! Authentication tags: a homomorphic hash bound to (fid, address, epoch) by a signature.

use alloc::vec::Vec;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand_core::{CryptoRng, RngCore};

use crate::block::Block;
use crate::error::{Error, Result};
use crate::homhash::HashValue;
use crate::params::{Address, SystemParams};
use crate::wire::Writer;
#[cfg(feature = "client")]
use crate::{homhash::hash_block_secret, params::SecretState};

/// A signature scheme over byte strings.
pub trait SignatureScheme {
    /// Returns `(psk, ssk)`.
    fn keygen<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> (Vec<u8>, Vec<u8>);
    fn sign(&self, ssk: &[u8], msg: &[u8]) -> Result<Vec<u8>>;
    fn verify(&self, psk: &[u8], msg: &[u8], sig: &[u8]) -> bool;
    fn signature_len(&self) -> usize;
}

/// Available signature backends, selected by the `sig_scheme` config key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SigScheme {
    /// Deterministic Ed25519: 64-byte signatures (4λ bits at λ = 128).
    Ed25519,
}

impl SigScheme {
    pub fn name(&self) -> &'static str {
        match self {
            SigScheme::Ed25519 => "ed25519",
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "ed25519" => Some(SigScheme::Ed25519),
            _ => None,
        }
    }

    pub fn id(&self) -> u8 {
        match self {
            SigScheme::Ed25519 => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(SigScheme::Ed25519),
            _ => None,
        }
    }
}

impl SignatureScheme for SigScheme {
    fn keygen<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> (Vec<u8>, Vec<u8>) {
        match self {
            SigScheme::Ed25519 => {
                let mut seed = [0u8; 32];
                rng.fill_bytes(&mut seed);
                let sk = SigningKey::from_bytes(&seed);
                (sk.verifying_key().to_bytes().to_vec(), seed.to_vec())
            }
        }
    }

    fn sign(&self, ssk: &[u8], msg: &[u8]) -> Result<Vec<u8>> {
        match self {
            SigScheme::Ed25519 => {
                let seed: [u8; 32] = ssk.try_into().map_err(|_| Error::Signature)?;
                Ok(SigningKey::from_bytes(&seed).sign(msg).to_bytes().to_vec())
            }
        }
    }

    fn verify(&self, psk: &[u8], msg: &[u8], sig: &[u8]) -> bool {
        match self {
            SigScheme::Ed25519 => {
                let Ok(pk) = <[u8; 32]>::try_from(psk) else { return false };
                let Ok(pk) = VerifyingKey::from_bytes(&pk) else { return false };
                let Ok(sig) = Signature::from_slice(sig) else { return false };
                pk.verify(msg, &sig).is_ok()
            }
        }
    }

    fn signature_len(&self) -> usize {
        match self {
            SigScheme::Ed25519 => 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AuthTag {
    pub hash: HashValue,
    pub signature: Vec<u8>,
}

impl AuthTag {
    /// Tag body size in bytes: a λ_p-bit hash plus the signature.
    pub fn body_len(params: &SystemParams) -> usize {
        params.lambda_p.div_ceil(8) as usize + params.sig_scheme.signature_len()
    }
}

/// hash (2-byte length ‖ magnitude) ‖ fid ‖ structure ‖ level ‖ side ‖ slot ‖ epoch.
pub fn canonical_message(hash: &HashValue, fid: &[u8; 16], addr: &Address, epoch: u64) -> Vec<u8> {
    let mut w = Writer::new();
    w.biguint(hash.value());
    w.raw(fid);
    w.raw(&addr.to_bytes());
    w.u64(epoch);
    w.into_bytes()
}

/// Signs an already computed hash at (addr, epoch).
#[cfg(feature = "client")]
pub fn sign_hash(
    params: &SystemParams,
    secret: &SecretState,
    hash: HashValue,
    addr: &Address,
    epoch: u64,
) -> Result<AuthTag> {
    let msg = canonical_message(&hash, &params.fid, addr, epoch);
    let signature = params.sig_scheme.sign(&secret.ssk, &msg)?;
    Ok(AuthTag { hash, signature })
}

#[cfg(feature = "client")]
pub fn make_tag(
    params: &SystemParams,
    secret: &SecretState,
    block: &Block,
    addr: &Address,
    epoch: u64,
) -> Result<AuthTag> {
    sign_hash(params, secret, hash_block_secret(params, secret, block), addr, epoch)
}

/// Accepts iff the signature verifies for exactly (fid, addr, epoch).
pub fn check_tag(params: &SystemParams, tag: &AuthTag, addr: &Address, epoch: u64) -> bool {
    let msg = canonical_message(&tag.hash, &params.fid, addr, epoch);
    params.sig_scheme.verify(&params.psk, &msg, &tag.signature)
}

/// Tag check plus the hash match against a block in hand.
pub fn check_block(params: &SystemParams, tag: &AuthTag, block: &Block, addr: &Address, epoch: u64) -> bool {
    check_tag(params, tag, addr, epoch) && crate::homhash::hash_block(params, block) == tag.hash
}
