//! Deterministic evaluation of multi-port direction-finding antenna systems
//! from sampled far-field data.
//!
//! The crate models far-field pattern sets for antenna ports or characteristic
//! modes, assembles per-direction measurement matrices over spherical-cap DoA
//! grids, and derives correlation/uncertainty figures of merit, ambiguity
//! reports, incident-field estimates, MUSIC/CRB baselines, and exhaustive
//! mode-subset rankings. Every operation is deterministic: identical inputs
//! produce bit-identical results regardless of thread count.

pub mod error;
pub mod estimators;
pub mod farfield;
pub mod geometry;
pub mod incident;
pub mod modeselect;
pub mod numerics;
pub mod synth;
pub mod uncertainty;

pub use error::{Error, Result};
