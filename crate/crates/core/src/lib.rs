//! Analytics core for device-free passive radio sensing.
//!
//! Everything in this crate is pure computation over channel quality
//! information (CQI) time series: pre-manipulation of raw samples,
//! subspace feature extraction, behavior features, and latent-process
//! inference. No IO, no clocks, no global state — trace formats, the
//! gateway daemon, and the cloud service live in the companion
//! `radiosense-platform` crate.
//!
//! The crate is `no_std`-compatible (`alloc` required); disable the
//! default `std` feature for embedded edge targets.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod behavior;
pub mod cqi;
pub mod error;
pub mod inference;
pub mod pca;

pub use error::CoreError;

/// Result alias used across the analytics core.
pub type Result<T> = core::result::Result<T, CoreError>;
