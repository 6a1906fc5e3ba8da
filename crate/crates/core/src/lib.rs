//! Joint IRS phase design, power allocation and user association for an
//! IRS-assisted multi-BS mmWave downlink.

pub mod assoc;
pub mod channel;
pub mod config;
pub mod error;
pub mod harness;
pub mod ippu;
pub mod irs_opt;
pub mod linalg;
pub mod power;
pub mod precode;

pub use error::{Error, Result};
