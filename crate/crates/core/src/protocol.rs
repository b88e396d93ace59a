//! Protocol messages and how they are framed on the wire.
//!
//! A frame is `type (1) ‖ length (4, BE) ‖ payload`. Requests use types
//! 0x01..=0x07, responses 0x81..=0x88.

use alloc::string::String;
use alloc::vec::Vec;

use num_bigint::BigUint;

use crate::block::{Block, WriteRecord};
use crate::error::{Error, Result};
use crate::merkle::{Digest, MerkleProof};
use crate::params::{Address, SystemParams};
use crate::schedule::{RebuildKind, RebuildTranscript};
use crate::sigtag::{AuthTag, SignatureScheme};
use crate::wire::{from_bytes, Reader, Wire, Writer};

pub const FRAME_HEADER: usize = 5;

/// Client-signed statement of the current write counter and Merkle root; the
/// auditor's source of "current time".
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CounterStatement {
    pub fid: [u8; 16],
    pub counter: u64,
    pub root: Digest,
    pub signature: Vec<u8>,
}

impl CounterStatement {
    pub fn message(fid: &[u8; 16], counter: u64, root: &Digest) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"DPOR-CTR");
        w.raw(fid);
        w.u64(counter);
        w.raw(root);
        w.into_bytes()
    }

    pub fn verify(&self, params: &SystemParams) -> bool {
        self.fid == params.fid
            && params.sig_scheme.verify(&params.psk, &Self::message(&self.fid, self.counter, &self.root), &self.signature)
    }
}

impl Wire for CounterStatement {
    fn put(&self, w: &mut Writer) {
        w.raw(&self.fid);
        w.u64(self.counter);
        w.raw(&self.root);
        w.bytes16(&self.signature);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        Ok(CounterStatement { fid: r.array()?, counter: r.u64()?, root: r.array()?, signature: r.bytes16()?.to_vec() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChallengeEntry {
    pub nu: BigUint,
    pub addr: Address,
}

impl Wire for ChallengeEntry {
    fn put(&self, w: &mut Writer) {
        w.biguint(&self.nu);
        self.addr.put(w);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        Ok(ChallengeEntry { nu: r.biguint()?, addr: r.get()? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Challenge {
    /// Counter of the statement the challenge was drawn against.
    pub counter: u64,
    pub entries: Vec<ChallengeEntry>,
}

impl Wire for Challenge {
    fn put(&self, w: &mut Writer) {
        w.u64(self.counter);
        w.seq(&self.entries);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        Ok(Challenge { counter: r.u64()?, entries: r.seq()? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AuditProof {
    pub bstar: Block,
    pub tags: Vec<AuthTag>,
    pub counter: u64,
}

impl Wire for AuditProof {
    fn put(&self, w: &mut Writer) {
        self.bstar.put(w);
        w.seq(&self.tags);
        w.u64(self.counter);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        Ok(AuditProof { bstar: r.get()?, tags: r.seq()?, counter: r.u64()? })
    }
}

/// Everything the server receives at initialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitUpload {
    pub params: SystemParams,
    /// U in logical order; physical slot i holds logical block i.
    pub blocks: Vec<Block>,
    pub u_tags: Vec<AuthTag>,
    /// Tags of C, X side then Y side.
    pub c_tags: Vec<AuthTag>,
}

impl Wire for InitUpload {
    fn put(&self, w: &mut Writer) {
        self.params.put(w);
        w.seq(&self.blocks);
        w.seq(&self.u_tags);
        w.seq(&self.c_tags);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        Ok(InitUpload { params: r.get()?, blocks: r.seq()?, u_tags: r.seq()?, c_tags: r.seq()? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadProof {
    pub slot: u64,
    pub block: Block,
    pub proof: MerkleProof,
}

impl Wire for ReadProof {
    fn put(&self, w: &mut Writer) {
        w.u64(self.slot);
        self.block.put(w);
        self.proof.put(w);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        Ok(ReadProof { slot: r.u64()?, block: r.get()?, proof: r.get()? })
    }
}

impl Wire for RebuildTranscript {
    fn put(&self, w: &mut Writer) {
        match self.kind {
            RebuildKind::Level(l) => {
                w.u8(0);
                w.u32(l);
            }
            RebuildKind::C => w.u8(1),
        }
        w.seq(&self.sources);
        w.seq(&self.outputs);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        let kind = match r.u8()? {
            0 => RebuildKind::Level(r.u32()?),
            1 => RebuildKind::C,
            _ => return Err(Error::Decode("bad rebuild kind")),
        };
        Ok(RebuildTranscript { kind, sources: r.seq()?, outputs: r.seq()? })
    }
}

/// Byte-accounting class of a request and its response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Init,
    Read,
    Write,
    RebuildTags,
    Audit,
}

impl Category {
    pub const ALL: [Category; 5] =
        [Category::Init, Category::Read, Category::Write, Category::RebuildTags, Category::Audit];

    pub fn name(&self) -> &'static str {
        match self {
            Category::Init => "init",
            Category::Read => "read",
            Category::Write => "write",
            Category::RebuildTags => "rebuild-tags",
            Category::Audit => "audit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Init(InitUpload),
    /// Authenticated read of a logical index.
    Read { index: u64 },
    /// Merkle paths for physical slots, without blocks.
    Proofs { slots: Vec<u64> },
    WriteApply { record: WriteRecord, u_tag: Option<AuthTag> },
    FetchTags { addrs: Vec<Address> },
    StoreTags { addrs: Vec<Address>, tags: Vec<AuthTag> },
    Audit(Challenge),
}

impl Request {
    pub fn frame_type(&self) -> u8 {
        match self {
            Request::Init(_) => 0x01,
            Request::Read { .. } => 0x02,
            Request::Proofs { .. } => 0x03,
            Request::WriteApply { .. } => 0x04,
            Request::FetchTags { .. } => 0x05,
            Request::StoreTags { .. } => 0x06,
            Request::Audit(_) => 0x07,
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Request::Init(_) => Category::Init,
            Request::Read { .. } => Category::Read,
            Request::Proofs { .. } | Request::WriteApply { .. } => Category::Write,
            Request::FetchTags { .. } | Request::StoreTags { .. } => Category::RebuildTags,
            Request::Audit(_) => Category::Audit,
        }
    }

    /// `true` for requests that never change server state.
    pub fn is_read_only(&self) -> bool {
        matches!(self, Request::Read { .. } | Request::Proofs { .. } | Request::FetchTags { .. } | Request::Audit(_))
    }

    fn put_payload(&self, w: &mut Writer) {
        match self {
            Request::Init(u) => u.put(w),
            Request::Read { index } => w.u64(*index),
            Request::Proofs { slots } => w.seq(slots),
            Request::WriteApply { record, u_tag } => {
                record.put(w);
                put_option(w, u_tag);
            }
            Request::FetchTags { addrs } => w.seq(addrs),
            Request::StoreTags { addrs, tags } => {
                w.seq(addrs);
                w.seq(tags);
            }
            Request::Audit(c) => c.put(w),
        }
    }

    pub fn decode(frame_type: u8, payload: &[u8]) -> Result<Self> {
        let mut r = Reader::new(payload);
        let req = match frame_type {
            0x01 => Request::Init(r.get()?),
            0x02 => Request::Read { index: r.u64()? },
            0x03 => Request::Proofs { slots: r.seq()? },
            0x04 => Request::WriteApply { record: r.get()?, u_tag: get_option(&mut r)? },
            0x05 => Request::FetchTags { addrs: r.seq()? },
            0x06 => Request::StoreTags { addrs: r.seq()?, tags: r.seq()? },
            0x07 => Request::Audit(r.get()?),
            _ => return Err(Error::Decode("unknown request type")),
        };
        r.finish()?;
        Ok(req)
    }

    pub fn to_frame(&self, seg_width: usize) -> Vec<u8> {
        let mut w = Writer::with_width(seg_width);
        self.put_payload(&mut w);
        frame(self.frame_type(), &w.into_bytes())
    }

    pub fn from_frame(bytes: &[u8]) -> Result<Self> {
        let (ty, payload) = split_frame(bytes)?;
        Self::decode(ty, payload)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Digest(Digest),
    ReadProof(ReadProof),
    Proofs(Vec<MerkleProof>),
    WriteAck { root: Digest, transcript: RebuildTranscript },
    Tags(Vec<AuthTag>),
    Ack,
    AuditProof(AuditProof),
    Error(String),
}

impl Response {
    pub fn frame_type(&self) -> u8 {
        match self {
            Response::Digest(_) => 0x81,
            Response::ReadProof(_) => 0x82,
            Response::Proofs(_) => 0x83,
            Response::WriteAck { .. } => 0x84,
            Response::Tags(_) => 0x85,
            Response::Ack => 0x86,
            Response::AuditProof(_) => 0x87,
            Response::Error(_) => 0x88,
        }
    }

    fn put_payload(&self, w: &mut Writer) {
        match self {
            Response::Digest(d) => w.raw(d),
            Response::ReadProof(p) => p.put(w),
            Response::Proofs(ps) => w.seq(ps),
            Response::WriteAck { root, transcript } => {
                w.raw(root);
                transcript.put(w);
            }
            Response::Tags(t) => w.seq(t),
            Response::Ack => {}
            Response::AuditProof(p) => p.put(w),
            Response::Error(msg) => w.bytes16(msg.as_bytes()),
        }
    }

    pub fn decode(frame_type: u8, payload: &[u8]) -> Result<Self> {
        let mut r = Reader::new(payload);
        let resp = match frame_type {
            0x81 => Response::Digest(r.array()?),
            0x82 => Response::ReadProof(r.get()?),
            0x83 => Response::Proofs(r.seq()?),
            0x84 => Response::WriteAck { root: r.array()?, transcript: r.get()? },
            0x85 => Response::Tags(r.seq()?),
            0x86 => Response::Ack,
            0x87 => Response::AuditProof(r.get()?),
            0x88 => Response::Error(
                String::from_utf8(r.bytes16()?.to_vec()).map_err(|_| Error::Decode("error text is not UTF-8"))?,
            ),
            _ => return Err(Error::Decode("unknown response type")),
        };
        r.finish()?;
        Ok(resp)
    }

    pub fn to_frame(&self, seg_width: usize) -> Vec<u8> {
        let mut w = Writer::with_width(seg_width);
        self.put_payload(&mut w);
        frame(self.frame_type(), &w.into_bytes())
    }

    pub fn from_frame(bytes: &[u8]) -> Result<Self> {
        let (ty, payload) = split_frame(bytes)?;
        Self::decode(ty, payload)
    }

    /// Turns a server-reported error into an `Err`.
    pub fn into_result(self) -> Result<Response> {
        match self {
            Response::Error(msg) => Err(Error::Protocol(msg)),
            other => Ok(other),
        }
    }
}

fn put_option<T: Wire>(w: &mut Writer, v: &Option<T>) {
    match v {
        Some(x) => {
            w.u8(1);
            x.put(w);
        }
        None => w.u8(0),
    }
}

fn get_option<T: Wire>(r: &mut Reader<'_>) -> Result<Option<T>> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some(r.get()?)),
        _ => Err(Error::Decode("bad option flag")),
    }
}

pub fn frame(frame_type: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_HEADER + payload.len());
    out.push(frame_type);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    out
}

/// Splits one complete frame; any length disagreement is a decode error.
pub fn split_frame(bytes: &[u8]) -> Result<(u8, &[u8])> {
    if bytes.len() < FRAME_HEADER {
        return Err(Error::Decode("truncated frame header"));
    }
    let len = u32::from_be_bytes(bytes[1..5].try_into().expect("4 bytes")) as usize;
    if bytes.len() - FRAME_HEADER != len {
        return Err(Error::Decode("frame length mismatch"));
    }
    Ok((bytes[0], &bytes[FRAME_HEADER..]))
}

/// A request/response channel to a server.
pub trait ServerLink {
    fn call(&mut self, req: &Request) -> Result<Response>;
}

impl<T: ServerLink + ?Sized> ServerLink for &mut T {
    fn call(&mut self, req: &Request) -> Result<Response> {
        (**self).call(req)
    }
}

/// Convenience decode of a full-value encoding, re-exported for callers that
/// persist single messages.
pub fn decode_statement(bytes: &[u8]) -> Result<CounterStatement> {
    from_bytes(bytes)
}
