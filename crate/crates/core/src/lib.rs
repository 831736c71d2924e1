//! Bit and power loading for multicarrier links and OFDM cognitive radio.
//!
//! The allocators share one channel model ([`channel`]) and report [`Allocation`]s or
//! power vectors; [`harness`] runs seeded Monte Carlo sweeps over them and [`cli`] wraps
//! the harness in a command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bitpower_moop;
pub mod channel;
pub mod config;
pub mod cr_bitpower;
pub mod ee_dinkelbach;
pub mod error;
pub mod ga;
pub mod cli;
pub mod harness;
pub mod oracle;
pub mod rate_interference;
pub mod rng;
pub mod selftest;
pub mod special;

pub use bitpower_moop::{Allocation, BerTargets, LinearCap, MoopWeights, MultiplierSet, RelaxedAllocation};
pub use channel::{ChannelRealization, OfdmConfig, PathLossModel, PuBand, SensingModel};
pub use error::{Error, Result};
