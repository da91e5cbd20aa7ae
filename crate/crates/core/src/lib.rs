//! Simulator for over-the-air majority-vote aggregation in federated edge learning.
//!
//! Edge devices encode the signs of their local gradients as pulse positions on
//! the bins of a DFT-spread OFDM symbol. All devices transmit at once, the
//! channel superposes their signals, and the edge server reads the majority vote
//! back with a non-coherent energy detector. Neither side needs channel state
//! information.
//!
//! Module map:
//!
//! - [`dsp`]: unitary transforms and the DFT-s-OFDM / plain OFDM chains, PMEPR.
//! - [`ppm`]: vote layout, slot mapping, pulse shape, encoder.
//! - [`detector`]: window energies and the sign decision.
//! - [`channel`]: power-delay profiles, tapped-delay-line draws, superposition.
//! - [`obda`]: coherent one-bit digital aggregation baseline with truncated
//!   channel inversion.
//! - [`training`]: signSGD with majority vote over a pluggable transport.
//! - [`analysis`]: closed-form error probabilities and convergence bound.
//! - [`validate`]: Monte Carlo versus closed-form consistency checks.

pub mod analysis;
pub mod channel;
pub mod detector;
pub mod dsp;
mod error;
pub mod obda;
pub mod ppm;
pub mod rng;
mod sign;
pub mod training;
pub mod validate;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use sign::{sign_or_random, SignVector};
