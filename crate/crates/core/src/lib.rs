//! Matrix cocycles over subshifts of finite type.
//!
//! Shifts and equilibrium Markov measures ([`symbolic`], [`gibbs`]), scaled
//! cocycle products ([`cocycle`]), Lyapunov spectra and spectral-radius growth
//! ([`lyapunov`]), large-deviation tails ([`deviations`]), singular-direction
//! geometry ([`geometry`]) and a bounded search for invariant subspace
//! families ([`irreducibility`]).

pub mod cocycle;
pub mod deviations;
pub mod error;
pub mod geometry;
pub mod gibbs;
pub mod irreducibility;
pub mod lyapunov;
pub mod rng;
pub mod stats;
pub mod symbolic;

pub use error::{Error, Result};
