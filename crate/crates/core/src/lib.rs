//! Cell-graph approximations of base-5 self-similar carpets, discrete
//! `p`-energies on them, and effective `p`-conductance experiments.
//!
//! * [`lattice`]: digit-defined fractals and their level-`n` cells.
//! * [`graph`]: adjacency graphs on those cells and the neighbourhoods `Γ(Q)`.
//! * [`solver`]: `p`-energies and the `p`-harmonic Dirichlet problem.
//! * [`lab`]: conductance bounds, ratio scans, decay fits and the critical
//!   exponent search.
//! * [`oracle`]: slow, independent reference implementations for testing.

pub mod error;
pub mod graph;
pub mod lab;
pub mod lattice;
pub mod oracle;
pub mod solver;

pub use error::{Error, Result};
pub use graph::{Adjacency, AdjacencyMode, CellGraph};
pub use lattice::{builtin_spec, CellIndex, CellSet, FractalSpec};
pub use solver::{
    energy, solve_dirichlet, ConductanceResult, DirichletProblem, GeneralBackend, LinearBackend,
    SolverConfig,
};
