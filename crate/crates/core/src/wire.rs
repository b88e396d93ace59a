//! Canonical byte encoding. Signatures and messages both depend on it staying fixed.
//!
//! Integers are big-endian. Big integers are a 2-byte length followed by the
//! big-endian magnitude. A block is a 2-byte segment count, a 1-byte field
//! width, then that many fixed-width segment fields.

use alloc::vec::Vec;

use num_bigint::BigUint;

use crate::block::{Block, UpdateType, WriteRecord};
use crate::error::{Error, Result};
use crate::homhash::HashValue;
use crate::params::{Address, SystemParams};
use crate::sigtag::{AuthTag, SigScheme};

pub struct Writer {
    buf: Vec<u8>,
    seg_width: usize,
}

impl Default for Writer {
    fn default() -> Self {
        Self::new()
    }
}

impl Writer {
    pub fn new() -> Self {
        Writer { buf: Vec::new(), seg_width: 0 }
    }

    /// Writer whose blocks use `width`-byte segment fields.
    pub fn with_width(width: usize) -> Self {
        Writer { buf: Vec::new(), seg_width: width }
    }

    pub fn for_params(params: &SystemParams) -> Self {
        Self::with_width(params.segment_width())
    }

    pub fn seg_width(&self) -> usize {
        self.seg_width
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn raw(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    /// 2-byte length prefix.
    pub fn bytes16(&mut self, b: &[u8]) {
        assert!(b.len() <= u16::MAX as usize, "field too long");
        self.u16(b.len() as u16);
        self.raw(b);
    }

    /// 4-byte length prefix.
    pub fn bytes32(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.raw(b);
    }

    pub fn biguint(&mut self, v: &BigUint) {
        if v.bits() == 0 {
            self.u16(0);
        } else {
            self.bytes16(&v.to_bytes_be());
        }
    }

    pub fn put<T: Wire + ?Sized>(&mut self, v: &T) {
        v.put(self);
    }

    /// 4-byte count followed by the items.
    pub fn seq<T: Wire>(&mut self, items: &[T]) {
        self.u32(items.len() as u32);
        for it in items {
            it.put(self);
        }
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Decode("truncated"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("N bytes"))
    }

    pub fn bytes16(&mut self) -> Result<&'a [u8]> {
        let n = self.u16()? as usize;
        self.take(n)
    }

    pub fn bytes32(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn biguint(&mut self) -> Result<BigUint> {
        let b = self.bytes16()?;
        if b.first() == Some(&0) {
            return Err(Error::Decode("non-minimal integer"));
        }
        Ok(BigUint::from_bytes_be(b))
    }

    pub fn get<T: Wire>(&mut self) -> Result<T> {
        T::get(self)
    }

    pub fn seq<T: Wire>(&mut self) -> Result<Vec<T>> {
        let n = self.u32()? as usize;
        // every encoded item takes at least one byte
        if n > self.remaining() {
            return Err(Error::Decode("sequence count exceeds input"));
        }
        (0..n).map(|_| T::get(self)).collect()
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Decode("trailing bytes"));
        }
        Ok(())
    }
}

/// Canonical binary form.
pub trait Wire: Sized {
    fn put(&self, w: &mut Writer);
    fn get(r: &mut Reader<'_>) -> Result<Self>;
}

pub fn to_bytes<T: Wire>(v: &T, seg_width: usize) -> Vec<u8> {
    let mut w = Writer::with_width(seg_width);
    v.put(&mut w);
    w.into_bytes()
}

/// Decodes a complete value; trailing bytes are an error.
pub fn from_bytes<T: Wire>(b: &[u8]) -> Result<T> {
    let mut r = Reader::new(b);
    let v = T::get(&mut r)?;
    r.finish()?;
    Ok(v)
}

impl Wire for u64 {
    fn put(&self, w: &mut Writer) {
        w.u64(*self);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        r.u64()
    }
}

impl Wire for BigUint {
    fn put(&self, w: &mut Writer) {
        w.biguint(self);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        r.biguint()
    }
}

impl Wire for HashValue {
    fn put(&self, w: &mut Writer) {
        w.biguint(self.value());
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        Ok(HashValue(r.biguint()?))
    }
}

impl Wire for AuthTag {
    fn put(&self, w: &mut Writer) {
        self.hash.put(w);
        w.bytes16(&self.signature);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        let hash = HashValue::get(r)?;
        let signature = r.bytes16()?.to_vec();
        Ok(AuthTag { hash, signature })
    }
}

impl Wire for Address {
    fn put(&self, w: &mut Writer) {
        w.raw(&self.to_bytes());
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        Address::from_bytes(&r.array()?)
    }
}

impl Wire for Block {
    fn put(&self, w: &mut Writer) {
        let width = w.seg_width.max(1);
        w.u16(self.len() as u16);
        w.u8(width as u8);
        for s in self.segments() {
            let b = s.to_bytes_be();
            let b: &[u8] = if s.bits() == 0 { &[] } else { &b };
            assert!(b.len() <= width, "segment wider than field");
            for _ in b.len()..width {
                w.u8(0);
            }
            w.raw(b);
        }
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        let m = r.u16()? as usize;
        let width = r.u8()? as usize;
        if width == 0 {
            return Err(Error::Decode("zero segment width"));
        }
        if m.saturating_mul(width) > r.remaining() {
            return Err(Error::Decode("truncated"));
        }
        let segs = (0..m).map(|_| r.take(width).map(BigUint::from_bytes_be)).collect::<Result<_>>()?;
        Ok(Block::new(segs))
    }
}

impl Wire for WriteRecord {
    fn put(&self, w: &mut Writer) {
        w.u8(self.updtype.to_byte());
        w.u64(self.logical_index);
        match &self.payload {
            Some(p) => {
                w.u8(1);
                w.bytes32(p);
            }
            None => w.u8(0),
        }
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        let updtype = UpdateType::from_byte(r.u8()?)?;
        let logical_index = r.u64()?;
        let payload = match r.u8()? {
            0 => None,
            1 => Some(r.bytes32()?.to_vec()),
            _ => return Err(Error::Decode("bad payload flag")),
        };
        let rec = WriteRecord { updtype, logical_index, payload };
        rec.check_shape().map_err(|_| Error::Decode("payload does not match update type"))?;
        Ok(rec)
    }
}

impl Wire for SystemParams {
    fn put(&self, w: &mut Writer) {
        w.u32(self.lambda);
        w.u32(self.lambda_p);
        w.u32(self.lambda_q);
        w.biguint(&self.p);
        w.biguint(&self.q);
        w.seq(&self.generators);
        w.biguint(&self.omega);
        w.u64(self.n);
        w.raw(&self.fid);
        w.u8(self.sig_scheme.id());
        w.bytes16(&self.psk);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        Ok(SystemParams {
            lambda: r.u32()?,
            lambda_p: r.u32()?,
            lambda_q: r.u32()?,
            p: r.biguint()?,
            q: r.biguint()?,
            generators: r.seq()?,
            omega: r.biguint()?,
            n: r.u64()?,
            fid: r.array()?,
            sig_scheme: SigScheme::from_id(r.u8()?).ok_or(Error::Decode("unknown signature scheme"))?,
            psk: r.bytes16()?.to_vec(),
        })
    }
}
