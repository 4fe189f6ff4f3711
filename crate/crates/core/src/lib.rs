//! Multiuser massive MIMO link-level kernels: channel generation, QPSK,
//! linear and nonlinear precoding, linear/SIC/ML detection, sum-rate and BER
//! accounting, and the per-packet Monte-Carlo steps that tie them together.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! the parallel driver live in the companion `mmimo` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod channel;
pub mod detectors;
pub mod error;
pub mod metrics;
pub mod modem;
pub mod numerics;
pub mod precoders;
pub mod sim;
pub mod stream;

#[cfg(test)]
mod test_util;

pub use error::Error;
pub use numerics::{Complex, ComplexMatrix, LinalgError};
