//! Dynamic proof of retrievability built from a homomorphic hash, signed
//! authentication tags and an incrementally built FFT erasure code.
//!
//! The crate is `no_std` and needs only `alloc`. Client-side secrets and
//! signing live behind the `client` feature. Nothing that verifies or
//! stores needs it.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod arith;
pub mod auditor;
pub mod block;
#[cfg(feature = "client")]
pub mod client;
pub mod code;
pub mod error;
pub mod extractor;
pub mod homhash;
pub mod linalg;
pub mod merkle;
pub mod params;
pub mod protocol;
pub mod schedule;
pub mod server;
pub mod sigtag;
pub mod wire;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
