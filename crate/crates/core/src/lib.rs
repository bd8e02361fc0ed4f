//! Explainable semantic federated learning over a simulated industrial edge
//! network.
//!
//! The crate trains a small semantic-communication image classifier across
//! heterogeneous simulated devices. Devices exchange model parameters instead
//! of raw data; an adaptive client training strategy clusters devices by data
//! volume and freezes the least-important parameters of each published model
//! (importance scored by the diagonal empirical Fisher information), and a
//! gradient-based activation-mapping explainer turns extracted semantic
//! features back into input-resolution heatmaps.
//!
//! Modules:
//! - [`autograd`]: dense/conv tensor ops with reverse-mode differentiation
//! - [`sc`]: semantic encoder, AWGN channel stage, decoder, CE loss
//! - [`fl`]: local SGD, weighted aggregation, the synchronous round loop
//! - [`act`]: k-medoids device clustering, Fisher importance, freeze masks
//! - [`esc`]: per-semantic-feature gradient heatmaps and PGM export
//! - [`edge`]: Shannon-rate links and per-round delay accounting
//! - [`config`], [`data`], [`metrics`], [`experiment`]: the experiment harness

pub mod act;
pub mod autograd;
pub mod config;
pub mod data;
pub mod edge;
pub mod error;
pub mod esc;
pub mod experiment;
pub mod fl;
pub mod metrics;
pub mod params;
pub mod pgm;
pub mod rng;
pub mod sc;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil;
