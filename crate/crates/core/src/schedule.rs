//! Binary-counter schedule of the hierarchical log.
//!
//! `W` is the global write counter and `w = W mod n` the writes since the last
//! rebuild of C. Level l is occupied iff bit l of w is set. The write issued at
//! pre-increment counter w merges levels `0..target_level(w)` plus the new
//! record into level `target_level(w)`; the write at w = n − 1 instead rebuilds
//! C from U and empties H.
//!
//! Epochs are post-increment counter values: a level filled by the write that
//! moved the counter to W' carries epoch W'.

use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::params::{epoch_of_level, Address, Side};

/// Level absorbing the merge cascade of the write at pre-increment counter `w`.
pub fn target_level(w: u64) -> u32 {
    w.trailing_ones()
}

pub fn occupied_levels(w: u64) -> Vec<u32> {
    (0..64).filter(|l| w >> l & 1 == 1).collect()
}

/// Counter value of the last rebuild of C.
pub fn c_epoch(n: u64, big_w: u64) -> u64 {
    big_w - big_w % n
}

/// Epoch every H or C slot was signed at, derived from (addr, W) alone.
pub fn slot_epoch(addr: &Address, n: u64, big_w: u64) -> Result<u64> {
    let w = big_w % n;
    match *addr {
        Address::H { level, .. } => Ok(big_w - w + epoch_of_level(w, level)?),
        Address::C { .. } => Ok(c_epoch(n, big_w)),
        Address::U { .. } => Err(Error::protocol("U epochs come from the position map")),
    }
}

/// Write index (mod n) of the first input held by occupied level `l`.
pub fn level_start(n: u64, big_w: u64, l: u32) -> Result<u64> {
    let w = big_w % n;
    Ok(epoch_of_level(w, l)? - (1u64 << l))
}

/// Both sides of level `l`, X first.
pub fn level_addresses(l: u32) -> Vec<Address> {
    let size = 1u64 << l;
    [Side::X, Side::Y]
        .into_iter()
        .flat_map(|side| (0..size).map(move |slot| Address::H { level: l, side, slot }))
        .collect()
}

/// All 2n slots of C, X first.
pub fn c_addresses(n: u64) -> Vec<Address> {
    [Side::X, Side::Y]
        .into_iter()
        .flat_map(|side| (0..n).map(move |slot| Address::C { side, slot }))
        .collect()
}

/// Codeword position of an H or C address within its structure.
pub fn codeword_position(addr: &Address, n: u64) -> Option<u64> {
    match *addr {
        Address::H { level, side, slot } => Some(slot + if side == Side::Y { 1u64 << level } else { 0 }),
        Address::C { side, slot } => Some(slot + if side == Side::Y { n } else { 0 }),
        Address::U { .. } => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RebuildKind {
    Level(u32),
    C,
}

/// Which tags a write invalidates and which it creates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RebuildTranscript {
    pub kind: RebuildKind,
    /// Slots whose current tags feed the hash-space rebuild.
    pub sources: Vec<Address>,
    /// Slots that need fresh tags afterwards, in the order the tags are stored.
    pub outputs: Vec<Address>,
}

/// Transcript of the write at pre-increment global counter `big_w`, given the
/// length of U after the write.
pub fn plan_rebuild(n: u64, big_w: u64, u_len: u64) -> RebuildTranscript {
    let w = big_w % n;
    if w == n - 1 {
        RebuildTranscript {
            kind: RebuildKind::C,
            sources: (0..u_len).map(|slot| Address::U { slot }).collect(),
            outputs: c_addresses(n),
        }
    } else {
        let l = target_level(w);
        RebuildTranscript {
            kind: RebuildKind::Level(l),
            sources: (0..l).flat_map(level_addresses).collect(),
            outputs: level_addresses(l),
        }
    }
}

/// `c` uniform slots from every occupied level and `c` from C, sampled with
/// replacement.
pub fn audit_addresses<R: RngCore + ?Sized>(n: u64, big_w: u64, c: usize, rng: &mut R) -> Result<Vec<Address>> {
    if c == 0 {
        return Err(Error::InvalidParams("per-level challenge count must be at least 1"));
    }
    let w = big_w % n;
    let mut out = Vec::with_capacity(c * (occupied_levels(w).len() + 1));
    for l in occupied_levels(w) {
        for _ in 0..c {
            let pos = uniform(rng, 2u64 << l);
            let side = if pos >> l == 0 { Side::X } else { Side::Y };
            out.push(Address::H { level: l, side, slot: pos & ((1u64 << l) - 1) });
        }
    }
    for _ in 0..c {
        let pos = uniform(rng, 2 * n);
        let side = if pos < n { Side::X } else { Side::Y };
        out.push(Address::C { side, slot: pos % n });
    }
    Ok(out)
}

/// Uniform in [0, bound) by rejection sampling.
pub(crate) fn uniform<R: RngCore + ?Sized>(rng: &mut R, bound: u64) -> u64 {
    assert!(bound > 0);
    let zone = u64::MAX - u64::MAX % bound;
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % bound;
        }
    }
}
