//! Detectability certification for networks of coupled nonlinear
//! discrete-time subsystems.
//!
//! The pipeline verifies a per-class linear matrix inequality over a
//! gridded compact operating set, extracts coupling gains, checks
//! small-gain conditions through spectral radii, composes network-level
//! trajectory-form and Lyapunov-form certificates, and empirically
//! falsifies every certified inequality by trajectory simulation.

pub mod config;
pub mod error;
pub mod falsify;
pub mod lmi;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod sdp;
pub mod smallgain;

pub use error::{Error, Result};
