//! Host-side analysis for a textile sleep mask with two hydrogel
//! biopotential electrodes and three resistive pressure patches.

pub mod acquisition;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod microevent;
pub mod physio;
pub mod recording;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
