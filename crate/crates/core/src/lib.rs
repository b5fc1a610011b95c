//! Multi-radio vehicle tracking testbed.
//!
//! Simulates DSRC Basic Safety Messages and Wi-Fi probe streams emitted by
//! vehicles that rotate pseudonyms, and implements a three-phase tracker that
//! chains pseudonyms inside each monitored zone, ties every chain to a Wi-Fi
//! identifier through RSSI similarity, and stitches trips across zones.

pub mod baseline;
pub mod config;
pub mod error;
pub mod eval;
pub mod linker;
pub mod mobility;
pub mod radar;
pub mod radio;
mod rng;
pub mod schemes;
pub mod trace;

pub use error::{Error, Result};
