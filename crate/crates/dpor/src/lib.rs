//! Std companion to `dpor-core`. Everything here does IO: metered
//! transports and on-disk state, with the bench and CLI on top.

pub mod bench;
pub mod cli;
pub mod config;
pub mod files;
pub mod transport;
