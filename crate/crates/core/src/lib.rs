//! TMSE-optimal acquisition of bandlimited Gaussian processes with uniform
//! ADCs: water-filling pre-sampling filters, Wiener recovery, closed-form
//! error expressions, and a Monte Carlo simulator of the full
//! filter → sample → dithered-quantize → reconstruct chain.

pub mod error;
pub mod spectra;
pub mod quantizer;
pub mod design;
pub mod simulate;
pub mod harness;
pub mod config;
pub mod acceptance;

pub use error::{Error, Result};
