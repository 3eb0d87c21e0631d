//! Message-passing solvers for selfish routing, bilevel toll design and flow control.
//!
//! The crate covers non-atomic Wardrop equilibria ([`mp_equilibrium`]), toll
//! optimization on top of them ([`bilevel_toll`]), integer-flow games
//! ([`atomic_mp`]) and resistance tuning on undirected networks
//! ([`flow_control`]). [`oracles`] holds centralized reference solvers.

pub mod atomic_mp;
pub mod bilevel_toll;
pub mod cost_model;
pub mod error;
pub mod fixtures;
pub mod flow_control;
pub mod network;
pub mod mp_equilibrium;
pub mod oracles;
pub mod piecewise;
pub mod rng;

pub use error::{Error, Result};
