//! Message passing for non-atomic Wardrop equilibria.
//!
//! Every (node, edge) slot carries a quadratic model of its cavity energy,
//! expanded around a working point that is annealed toward the edge's marginal
//! optimum. Slots whose cavity problem has a flat Lagrangian root carry a kinked
//! model instead.

mod cavity;
mod message;
mod solver;

pub use cavity::{
    search_root, solve_root, CavityRoot, RootSearch, CavityView, EdgeLayer, LeafRule, PotentialLayer, Scratch, SlotInfo, SocialLayer,
    Topology,
};
pub use message::{Branch, LowerMessage, Shape};
pub use solver::{
    linf, run_equilibrium, run_equilibrium_multidest, DestinationMethod, EquilibriumReport, EquilibriumSolver,
    MpParams, SweepRecord,
};
