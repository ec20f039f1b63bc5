//! Over-the-air federated learning with polar-coded compressed sensing.
//!
//! Workers sparsify their gradients (top-K with error feedback), compress the
//! sparse vector into a short real measurement whose columns are built from
//! CRC-aided polar codewords spread by random ±1 sequences, and transmit it
//! with mean-removal power control over a shared AWGN multiple-access channel.
//! The parameter server sees the superposition, undoes the power control and
//! recovers the largest entries with an iterative matched-filter, list-decoding,
//! least-squares and interference-cancellation loop.
//!
//! Module map:
//! - [`polar`]: CRC, polar construction/encoding and CRC-aided SCL decoding.
//! - [`spreading`]: spreading dictionaries, matched filter and energy detector.
//! - [`codec`]: index encoding, measurement, least squares and recovery.
//! - [`channel`]: power control, the MAC and PS-side preprocessing.
//! - [`model`]: a small MLP, a synthetic dataset and ADAM.
//! - [`sim`]: the federated training loop and the adaptive measurement policy.
//! - [`metrics`], [`config`], [`report`]: set statistics, config loading and CSV output.

pub mod channel;
pub mod codec;
pub mod config;
pub mod error;
pub mod metrics;
pub mod model;
pub mod polar;
pub mod report;
pub mod sim;
pub mod spreading;

pub use error::{Error, Result};
