//! Streaming identification of discrete-time state-dependent switched affine
//! systems.
//!
//! The estimator couples two stochastic approximation recursions running on
//! different timescales:
//!
//! * a slow online deterministic annealing scheme ([`oda`]) that learns a
//!   prototype-based (Voronoi) partition of the feature domain and grows the
//!   number of prototypes through perturbation-driven bifurcation, and
//! * a fast recursive identifier ([`localid`]) that fits the affine dynamics
//!   of each mode by stochastic gradient descent on the prediction error.
//!
//! [`hybrid`] orchestrates both into the full annealing loop and produces an
//! [`hybrid::EstimatedHybridModel`]: the number of modes, their parameter
//! matrices, and the polyhedral partition induced by the prototypes.
//!
//! The crate is `no_std` (with `alloc`); IO, simulation and the experiment
//! harness live in the companion `switchid` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod divergence;
pub mod error;
pub mod hybrid;
pub mod localid;
pub mod oda;
pub mod rng;

pub use divergence::Divergence;
pub use error::Error;
pub use hybrid::{EstimatedHybridModel, Identifier, IdentifierConfig};
pub use localid::{LocalModel, StepSchedule};
pub use oda::Codevector;

pub type Result<T> = core::result::Result<T, Error>;
