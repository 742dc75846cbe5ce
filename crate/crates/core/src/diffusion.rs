//! The small-Kn limit: `(1/3)(rho'/sigma_s)' = sigma_a rho` with Dirichlet
//! data, its Green's pair, the half-space layer problem, and interior errors.

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::mesh::{AngularQuadrature, SpatialGrid};
use crate::output::{fmt_num, write_rows};
use crate::transport::{
    BoundaryData, RightEnd, SolverOptions, TransportProblem, TransportSolution, TransportSolver,
};
use std::path::Path;

pub const DIFFUSION_CONSTANT: f64 = 1.0 / 3.0;

#[derive(Debug, Clone)]
pub struct DiffusionProblem {
    pub grid: SpatialGrid,
    pub sigma_s: CoefficientField,
    pub sigma_a: CoefficientField,
    pub xi_left: f64,
    pub xi_right: f64,
}

impl DiffusionProblem {
    pub fn new(grid: SpatialGrid, sigma_s: CoefficientField, sigma_a: CoefficientField, xi_left: f64, xi_right: f64) -> Result<Self> {
        for f in [&sigma_s, &sigma_a] {
            if f.len() != grid.n_x() {
                return Err(Error::Mismatch("coefficient length differs from grid".into()));
            }
        }
        sigma_s.check_positive("sigma_s")?;
        sigma_a.check_nonnegative("sigma_a")?;
        Ok(Self { grid, sigma_s, sigma_a, xi_left, xi_right })
    }

    pub fn c_diff(&self) -> f64 {
        DIFFUSION_CONSTANT
    }
}

/// Three-point scheme; the flux coefficient on each cell is
/// `1/sigma_s` at the cell average of `sigma_s`, the same cell value the
/// transport solver uses.
pub fn solve_diffusion(problem: &DiffusionProblem) -> Result<CoefficientField> {
    let x = problem.grid.nodes();
    let n = x.len();
    let s = problem.sigma_s.values();
    let a = problem.sigma_a.values();
    let flux: Vec<f64> = (0..n - 1)
        .map(|c| DIFFUSION_CONSTANT / (0.5 * (s[c] + s[c + 1])) / (x[c + 1] - x[c]))
        .collect();
    // interior unknowns 1..n-2, rows scaled by the dual cell length
    let k = n - 2;
    let mut lo = vec![0.0; k];
    let mut di = vec![0.0; k];
    let mut up = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for r in 0..k {
        let i = r + 1;
        let dual = 0.5 * (x[i + 1] - x[i - 1]);
        di[r] = flux[i - 1] + flux[i] + a[i] * dual;
        if r > 0 {
            lo[r] = -flux[i - 1];
        } else {
            rhs[r] += flux[0] * problem.xi_left;
        }
        if r + 1 < k {
            up[r] = -flux[i];
        } else {
            rhs[r] += flux[n - 2] * problem.xi_right;
        }
    }
    let inner = thomas(&lo, &di, &up, &rhs)?;
    let mut rho = Vec::with_capacity(n);
    rho.push(problem.xi_left);
    rho.extend(inner);
    rho.push(problem.xi_right);
    Ok(CoefficientField::new(rho))
}

fn thomas(lo: &[f64], di: &[f64], up: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = di.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let den = di[i] - if i > 0 { lo[i] * c[i - 1] } else { 0.0 };
        if den.abs() <= f64::EPSILON * di[i].abs() || !den.is_finite() {
            return Err(Error::SolverFailure { stage: "diffusion tridiagonal solve".into(), residual: f64::INFINITY });
        }
        c[i] = up[i] / den;
        d[i] = (rhs[i] - if i > 0 { lo[i] * d[i - 1] } else { 0.0 }) / den;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

#[derive(Debug, Clone)]
pub struct GreensPair {
    /// data (1, 0)
    pub g1: CoefficientField,
    /// data (0, 1)
    pub g2: CoefficientField,
}

pub fn greens_functions(sigma_s: &CoefficientField, sigma_a: &CoefficientField, grid: &SpatialGrid) -> Result<GreensPair> {
    let solve = |l, r| solve_diffusion(&DiffusionProblem::new(grid.clone(), sigma_s.clone(), sigma_a.clone(), l, r)?);
    Ok(GreensPair { g1: solve(1.0, 0.0)?, g2: solve(0.0, 1.0)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Closure {
    /// `f(Z, -mu) = f(Z, mu)`
    Specular,
    /// incoming at `Z` equals the half-range average of the outgoing values
    AverageMatching,
}

#[derive(Debug, Clone)]
pub struct HalfSpaceProblem {
    pub sigma_s: f64,
    /// `phi(mu_j)` on the positive ordinates of `quad`
    pub inflow: Vec<f64>,
    pub quad: AngularQuadrature,
    /// truncation length in mean free paths
    pub z: f64,
    pub closure: Closure,
    /// nodes across [0, Z]; the cells are exact for constant coefficients
    pub n_x: usize,
}

impl HalfSpaceProblem {
    pub fn new(sigma_s: f64, inflow: Vec<f64>, quad: AngularQuadrature, z: f64, closure: Closure) -> Result<Self> {
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::Config(format!("half-space length must be positive, got {z}")));
        }
        if !(sigma_s.is_finite() && sigma_s > 0.0) {
            return Err(Error::InvalidCoefficient(format!("sigma_s must be positive, got {sigma_s}")));
        }
        if inflow.len() != quad.half() {
            return Err(Error::Mismatch(format!("inflow needs {} values", quad.half())));
        }
        Ok(Self { sigma_s, inflow, quad, z, closure, n_x: 101 })
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HalfSpaceResult {
    pub xi: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    /// `|xi(2Z) - xi(Z)| / |xi(Z)|`
    pub sensitivity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

fn halfspace_at(problem: &HalfSpaceProblem, z: f64) -> Result<f64> {
    // Lengths in mean free paths: unit slab with sigma_s = z and Kn = 1,
    // so the answer cannot depend on the physical sigma_s.
    let grid = SpatialGrid::uniform(problem.n_x)?;
    let tp = TransportProblem::new(
        grid.clone(),
        problem.quad.clone(),
        CoefficientField::constant(&grid, z),
        CoefficientField::constant(&grid, 0.0),
        1.0,
    )?;
    let right = match problem.closure {
        Closure::Specular => RightEnd::Specular,
        Closure::AverageMatching => RightEnd::AverageMatching,
    };
    let solver = TransportSolver::with_right_end(&tp, SolverOptions::default(), right)?;
    let data = BoundaryData { left: problem.inflow.clone(), right: vec![0.0; problem.quad.half()] };
    let f = solver.forward(&data)?;
    Ok(*f.average().values().last().expect("nonempty grid"))
}

pub fn halfspace_limit(problem: &HalfSpaceProblem) -> Result<HalfSpaceResult> {
    let xi = halfspace_at(problem, problem.z)?;
    let xi2 = halfspace_at(problem, 2.0 * problem.z)?;
    let sensitivity = (xi2 - xi).abs() / xi.abs().max(f64::MIN_POSITIVE);
    let warning = (sensitivity > 0.05).then(|| {
        format!("not converged in Z: doubling Z changes xi by {:.2}%", 100.0 * sensitivity)
    });
    Ok(HalfSpaceResult { xi, z: problem.z, sensitivity, warning })
}

/// Nodes farther than `factor * Kn / max sigma_s` from both ends, i.e.
/// `factor` shortest mean free paths.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorMask {
    pub indices: Vec<usize>,
    pub width: f64,
}

impl InteriorMask {
    pub fn new(grid: &SpatialGrid, factor: f64, kn: f64, sigma_s: &CoefficientField) -> Result<Self> {
        let width = factor * kn / sigma_s.max();
        let indices: Vec<usize> = grid
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, x)| x.min(1.0 - **x) > width)
            .map(|(i, _)| i)
            .collect();
        if indices.is_empty() {
            return Err(Error::EmptyInterior(format!("layer width {width} leaves no interior node")));
        }
        Ok(Self { indices, width })
    }

    /// The mask shared by a Kn sweep: set by the largest Kn so every member
    /// of the sweep is compared on the same nodes.
    pub fn for_sweep(grid: &SpatialGrid, factor: f64, kn_list: &[f64], sigma_s: &CoefficientField) -> Result<Self> {
        let kn = kn_list.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self::new(grid, factor, kn, sigma_s)
    }
}

pub fn interior_error(transport: &TransportSolution, diffusion: &CoefficientField, mask: &InteriorMask) -> Result<f64> {
    if transport.n_x() != diffusion.len() {
        return Err(Error::Mismatch("transport and diffusion grids differ".into()));
    }
    let avg = transport.average();
    Ok(mask
        .indices
        .iter()
        .map(|&i| (avg.values()[i] - diffusion.values()[i]).abs())
        .fold(0.0, f64::max))
}

pub fn write_field_csv(path: &Path, nodes: &[f64], field: &CoefficientField) -> Result<()> {
    let rows = nodes.iter().zip(field.values()).map(|(x, v)| vec![fmt_num(*x), fmt_num(*v)]);
    write_rows(path, &["x", "value"], rows)
}
