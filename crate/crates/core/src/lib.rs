//! Guaranteed time-varying bounds on the means and variances of stochastic
//! chemical reaction networks, from moment equations and semidefinite
//! programming, with a brute-force master-equation oracle for validation.

pub mod assembly;
pub mod cone;
pub mod dynamics;
pub mod fixtures;
pub mod network;
pub mod oracle;
pub mod poly;
pub mod rational;
pub mod solver;
pub mod trajectory;

pub use assembly::{assemble, BoundQuery, ConicProblem, Sense, Statistic};
pub use dynamics::{build_moment_odes, MomentBasis, MomentDynamics};
pub use network::{parse_network, reduce, ReactionNetwork, ReducedModel};
pub use oracle::Oracle;
pub use solver::{ClarabelBackend, ConicSolver, SolveStatus, SolverSettings, Tolerances};
pub use trajectory::{bound_trajectory, BoundOptions, BoundPoint, RhoSpec, Scaling, Target};
