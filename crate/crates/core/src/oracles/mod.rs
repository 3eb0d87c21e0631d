//! Independent reference solvers used to check and normalize the message-passing
//! results. Nothing here depends on the message-passing modules.

mod atomic;
mod convex;
mod finite_difference;
mod laplacian;

pub use atomic::{atomic_bruteforce, atomic_potential_minimizer, atomic_social_optimum, BruteForce};
pub use convex::{convex_equilibrium, convex_equilibrium_warm, social_optimum, OracleReport};
pub use finite_difference::finite_difference;
pub use laplacian::{laplacian_solve, ReducedLaplacian};
