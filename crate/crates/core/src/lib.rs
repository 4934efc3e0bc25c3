//! Gaussian-basis wavepacket propagation with linear-dependency handling.
//!
//! Coherent states on classical trajectories are propagated either by the
//! variational working-space scheme ([`propagator`]) or by regularized
//! Crank-Nicolson baselines ([`baseline`]), and compared with an
//! oscillator-basis reference.

pub mod baseline;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod propagator;
pub mod trajectories;
pub mod workspace;

pub use error::{Error, Result};
