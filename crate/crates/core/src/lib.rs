//! Downlink two-tier macro/pico simulator with dynamic interference steering.
//!
//! - [`numkit`]: complex vectors/matrices, SVD, pseudo-inverse, projectors.
//! - [`channel`]: antenna sets, path loss, link budgets, seeded Rayleigh drops.
//! - [`schemes`]: MF, ZF, ZFBF, IN, OIS and fixed-ρ steering.
//! - [`steering`]: optimal steering factor, multi-interference and multi-stream DIS.
//! - [`experiment`]: Monte-Carlo sweeps, CSV output and the CLI.

pub mod channel;
pub mod error;
pub mod experiment;
pub mod numkit;
pub mod schemes;
pub mod steering;

pub use error::{Error, Result};
