//! Slab transport `v f_x = (sigma_s/Kn)(<f> - f) - Kn sigma_a f` on (0, 1).
//!
//! The discrete-ordinates system is solved in even-parity form: the nodal
//! unknowns are `u = (f(+mu) + f(-mu))/2` for the positive ordinates, and
//! each cell is integrated exactly for its (node-averaged) coefficients.
//! The odd part and hence `f(x_i, +-mu_j)` follow from the cell solutions.
//! Backward solves use the reflection `g(x, v) -> g(x, -v)`, which maps the
//! adjoint equation onto the forward one.

pub(crate) mod cell;
mod operator;
mod solution;
mod solver;

pub use operator::{DiscreteTransportOperator, RightEnd};
pub use solution::TransportSolution;
pub use solver::{gmres, BlockLu, GmresOutcome, SolverKind, SolverOptions, TransportSolver};

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::mesh::{AngularQuadrature, SpatialGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjointMode {
    /// Backward equation with `g` prescribed on the outgoing boundary.
    Continuous,
    /// Transpose of the forward system against the boundary functional.
    Algebraic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Endpoint {
    Left,
    Right,
}

#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub grid: SpatialGrid,
    pub quad: AngularQuadrature,
    pub sigma_s: CoefficientField,
    pub sigma_a: CoefficientField,
    pub kn: f64,
}

impl TransportProblem {
    pub fn new(
        grid: SpatialGrid,
        quad: AngularQuadrature,
        sigma_s: CoefficientField,
        sigma_a: CoefficientField,
        kn: f64,
    ) -> Result<Self> {
        if !(kn.is_finite() && kn > 0.0) {
            return Err(Error::InvalidCoefficient(format!("Kn must be positive, got {kn}")));
        }
        for (name, f) in [("sigma_s", &sigma_s), ("sigma_a", &sigma_a)] {
            if f.len() != grid.n_x() {
                return Err(Error::Mismatch(format!(
                    "{name} has {} values for {} nodes",
                    f.len(),
                    grid.n_x()
                )));
            }
        }
        sigma_s.check_positive("sigma_s")?;
        sigma_a.check_nonnegative("sigma_a")?;
        Ok(Self { grid, quad, sigma_s, sigma_a, kn })
    }

    /// Same grids and Kn with other coefficients.
    pub fn with_coefficients(&self, sigma_s: CoefficientField, sigma_a: CoefficientField) -> Result<Self> {
        Self::new(self.grid.clone(), self.quad.clone(), sigma_s, sigma_a, self.kn)
    }
}

/// Values on one half of the boundary, `m = n_v/2` per endpoint, indexed by
/// the positive ordinate `mu_j`.
///
/// As inflow: `left[j] = f(0, +mu_j)`, `right[j] = f(1, -mu_j)`.
/// As adjoint (outflow) data: `left[j] = g(0, -mu_j)`, `right[j] = g(1, +mu_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl BoundaryData {
    pub fn zeros(quad: &AngularQuadrature) -> Self {
        Self { left: vec![0.0; quad.half()], right: vec![0.0; quad.half()] }
    }

    pub fn constant(quad: &AngularQuadrature, c: f64) -> Self {
        Self { left: vec![c; quad.half()], right: vec![c; quad.half()] }
    }

    /// Data given as a function of the signed ordinate on each end.
    pub fn from_fn(quad: &AngularQuadrature, left: impl Fn(f64) -> f64, right: impl Fn(f64) -> f64, outflow: bool) -> Self {
        let s = if outflow { -1.0 } else { 1.0 };
        Self {
            left: quad.mu().iter().map(|&mu| left(s * mu)).collect(),
            right: quad.mu().iter().map(|&mu| right(-s * mu)).collect(),
        }
    }

    /// Indicator of one endpoint's half-range.
    pub fn endpoint(quad: &AngularQuadrature, end: Endpoint) -> Self {
        let mut b = Self::zeros(quad);
        match end {
            Endpoint::Left => b.left.fill(1.0),
            Endpoint::Right => b.right.fill(1.0),
        }
        b
    }

    /// A single ordinate `j` on one end with value `value`.
    pub fn delta(quad: &AngularQuadrature, end: Endpoint, j: usize, value: f64) -> Self {
        let mut b = Self::zeros(quad);
        match end {
            Endpoint::Left => b.left[j] = value,
            Endpoint::Right => b.right[j] = value,
        }
        b
    }

    pub fn max_abs(&self) -> f64 {
        self.left.iter().chain(&self.right).fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.left.iter().chain(&self.right).cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            left: self.left.iter().map(|v| a * v).collect(),
            right: self.right.iter().map(|v| a * v).collect(),
        }
    }
}

pub fn assemble_operator(problem: &TransportProblem, direction: Direction) -> DiscreteTransportOperator {
    DiscreteTransportOperator::build(problem, direction, RightEnd::Inflow)
}

pub fn solve_forward(problem: &TransportProblem, inflow: &BoundaryData) -> Result<TransportSolution> {
    TransportSolver::new(problem, SolverOptions::default())?.forward(inflow)
}

pub fn solve_adjoint(
    problem: &TransportProblem,
    outflow_data: &BoundaryData,
    mode: AdjointMode,
) -> Result<TransportSolution> {
    TransportSolver::new(problem, SolverOptions::default())?.adjoint(outflow_data, mode)
}

/// Outgoing measurement `sum_{v.n > 0} omega_j |v_j| f` at one endpoint.
pub fn measure_outflow(solution: &TransportSolution, endpoint: Endpoint) -> f64 {
    solution.measure(endpoint)
}

pub fn net_flux(solution: &TransportSolution, node: usize) -> f64 {
    solution.flux(node)
}

pub fn angular_average(solution: &TransportSolution) -> CoefficientField {
    solution.average()
}
