//! Blocks as vectors of Z_q segments, with byte packing and write records.
//!
//! Every stored block starts with a 13-byte header so that log entries can be
//! replayed after erasure decoding:
//!
//! ```text
//! kind (1) | logical index (8, BE) | payload length (4, BE) | payload ...
//! ```
//!
//! `kind` 0 is the absent/null block (all zero), 1 a data block of U, and 2..=4
//! the insert/delete/modify records appended to the hierarchical log.

use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigUint;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::params::SystemParams;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Block {
    segments: Vec<BigUint>,
}

impl Block {
    pub fn new(segments: Vec<BigUint>) -> Self {
        Block { segments }
    }

    pub fn zero(m: usize) -> Self {
        Block { segments: vec![BigUint::zero(); m] }
    }

    pub fn segments(&self) -> &[BigUint] {
        &self.segments
    }

    pub fn segments_mut(&mut self) -> &mut [BigUint] {
        &mut self.segments
    }

    pub fn into_segments(self) -> Vec<BigUint> {
        self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.segments.iter().all(Zero::is_zero)
    }

    /// `true` iff the block has `m` segments, each reduced mod q.
    pub fn is_valid(&self, params: &SystemParams) -> bool {
        self.segments.len() == params.m() && self.segments.iter().all(|s| s < &params.q)
    }
}

/// Packs `data` MSB-first into consecutive `(λ_q − 1)`-bit segments, zero padded.
pub fn segment_block(params: &SystemParams, data: &[u8]) -> Result<Block> {
    let cap = params.block_bytes();
    if data.len() > cap {
        return Err(Error::Oversize { len: data.len(), cap });
    }
    let bits = params.segment_bits() as usize;
    let bit_at = |i: usize| -> bool {
        let byte = i / 8;
        byte < data.len() && (data[byte] >> (7 - i % 8)) & 1 == 1
    };
    let segments = (0..params.m())
        .map(|s| {
            let mut v = BigUint::zero();
            let base = s * bits;
            for b in 0..bits {
                if bit_at(base + b) {
                    v.set_bit((bits - 1 - b) as u64, true);
                }
            }
            v
        })
        .collect();
    Ok(Block { segments })
}

/// Inverse of [`segment_block`]; always returns `block_bytes()` bytes.
pub fn block_to_bytes(params: &SystemParams, block: &Block) -> Result<Vec<u8>> {
    let bits = params.segment_bits() as usize;
    if block.len() != params.m() {
        return Err(Error::LengthMismatch { expected: params.m(), got: block.len() });
    }
    let cap = params.block_bytes();
    let mut out = vec![0u8; cap];
    for (s, seg) in block.segments.iter().enumerate() {
        if seg.bits() > bits as u64 {
            return Err(Error::Decode("segment exceeds payload width"));
        }
        for b in 0..bits {
            if seg.bit((bits - 1 - b) as u64) {
                let i = s * bits + b;
                if i / 8 >= cap {
                    return Err(Error::Decode("nonzero padding bits"));
                }
                out[i / 8] |= 1 << (7 - i % 8);
            }
        }
    }
    Ok(out)
}

pub const HEADER_LEN: usize = 13;

/// Largest user payload one block can hold after the header.
pub fn payload_capacity(params: &SystemParams) -> usize {
    params.block_bytes().saturating_sub(HEADER_LEN)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateType {
    Insert,
    Delete,
    Modify,
}

impl UpdateType {
    fn kind(self) -> u8 {
        match self {
            UpdateType::Insert => 2,
            UpdateType::Delete => 3,
            UpdateType::Modify => 4,
        }
    }

    pub fn to_byte(self) -> u8 {
        self.kind()
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            2 => Ok(UpdateType::Insert),
            3 => Ok(UpdateType::Delete),
            4 => Ok(UpdateType::Modify),
            _ => Err(Error::Decode("bad update type")),
        }
    }
}

/// One logical write. Insert places the payload so that it becomes logical index
/// `logical_index`; delete carries no payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WriteRecord {
    pub updtype: UpdateType,
    pub logical_index: u64,
    pub payload: Option<Vec<u8>>,
}

impl WriteRecord {
    pub fn insert(at: u64, data: Vec<u8>) -> Self {
        WriteRecord { updtype: UpdateType::Insert, logical_index: at, payload: Some(data) }
    }

    pub fn delete(index: u64) -> Self {
        WriteRecord { updtype: UpdateType::Delete, logical_index: index, payload: None }
    }

    pub fn modify(index: u64, data: Vec<u8>) -> Self {
        WriteRecord { updtype: UpdateType::Modify, logical_index: index, payload: Some(data) }
    }

    /// Shape check: payload present exactly for insert/modify.
    pub fn check_shape(&self) -> Result<()> {
        match (self.updtype, &self.payload) {
            (UpdateType::Delete, None) => Ok(()),
            (UpdateType::Insert | UpdateType::Modify, Some(_)) => Ok(()),
            _ => Err(Error::protocol("payload does not match update type")),
        }
    }

    /// Log-entry block appended to the hierarchical log.
    pub fn to_block(&self, params: &SystemParams) -> Result<Block> {
        self.check_shape()?;
        let payload = self.payload.as_deref().unwrap_or(&[]);
        encode_entry(params, self.updtype.kind(), self.logical_index, payload)
    }
}

/// Data block as stored in U (and, encoded, in C).
pub fn data_block(params: &SystemParams, payload: &[u8]) -> Result<Block> {
    encode_entry(params, 1, 0, payload)
}

fn encode_entry(params: &SystemParams, kind: u8, index: u64, payload: &[u8]) -> Result<Block> {
    let cap = payload_capacity(params);
    if payload.len() > cap {
        return Err(Error::Oversize { len: payload.len(), cap });
    }
    let mut bytes = Vec::with_capacity(HEADER_LEN + payload.len());
    bytes.push(kind);
    bytes.extend_from_slice(&index.to_be_bytes());
    bytes.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    bytes.extend_from_slice(payload);
    segment_block(params, &bytes)
}

/// A decoded stored block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Entry {
    Null,
    Data(Vec<u8>),
    Record(WriteRecord),
}

pub fn decode_entry(params: &SystemParams, block: &Block) -> Result<Entry> {
    let bytes = block_to_bytes(params, block)?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Decode("block too small for header"));
    }
    let kind = bytes[0];
    let index = u64::from_be_bytes(bytes[1..9].try_into().expect("8 bytes"));
    let len = u32::from_be_bytes(bytes[9..13].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(HEADER_LEN..HEADER_LEN + len).ok_or(Error::Decode("payload length"))?;
    if bytes[HEADER_LEN + len..].iter().any(|&b| b != 0) {
        return Err(Error::Decode("trailing bytes after payload"));
    }
    match kind {
        0 if bytes.iter().all(|&b| b == 0) => Ok(Entry::Null),
        1 if index == 0 => Ok(Entry::Data(body.to_vec())),
        3 if len == 0 => Ok(Entry::Record(WriteRecord::delete(index))),
        2 | 4 => Ok(Entry::Record(WriteRecord {
            updtype: UpdateType::from_byte(kind)?,
            logical_index: index,
            payload: Some(body.to_vec()),
        })),
        _ => Err(Error::Decode("bad entry header")),
    }
}
