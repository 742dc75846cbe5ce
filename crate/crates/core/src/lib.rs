//! Forward and adjoint slab transport solves, linearized inverse kernels for
//! absorption and scattering, the diffusion limit, and conditioning
//! diagnostics for the kernels as the Knudsen number shrinks.

pub mod coeff;
pub mod cli;
pub mod conditioning;
pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod mesh;
pub mod output;
pub mod transport;

pub use coeff::{CoefficientField, Expression, Preset};
pub use error::{Error, Result};
pub use mesh::{make_gauss_quadrature, make_uniform_grid, AngularQuadrature, SpatialGrid};
pub use transport::{
    angular_average, assemble_operator, measure_outflow, net_flux, solve_adjoint, solve_forward,
    AdjointMode, BoundaryData, Direction, Endpoint, TransportProblem, TransportSolution,
    TransportSolver,
};
pub use diffusion::InteriorMask;
