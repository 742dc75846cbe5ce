use super::operator::{DiscreteTransportOperator, RightEnd};
use super::{AdjointMode, BoundaryData, Direction, TransportProblem, TransportSolution};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, LU};
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Block-tridiagonal LU, factorized once per operator.
    Direct,
    /// Restarted GMRES with block-Jacobi preconditioning, direct fallback.
    Gmres,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverOptions {
    pub kind: SolverKind,
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { kind: SolverKind::Direct, tol: 1e-10, restart: 50, max_iter: 5000 }
    }
}

/// Block Thomas factorization of a block-tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct BlockLu {
    m: usize,
    pivots: Vec<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    /// D'_i^-1 U_i
    gains: Vec<DMatrix<f64>>,
    lower: Vec<DMatrix<f64>>,
}

impl BlockLu {
    pub fn factor(op: &DiscreteTransportOperator) -> Result<Self> {
        let n = op.n_x;
        let m = op.block_size();
        let mut pivots = Vec::with_capacity(n);
        let mut gains = Vec::with_capacity(n - 1);
        let mut d = op.diag[0].clone();
        for i in 0..n {
            let lu = LU::new(d);
            if i + 1 < n {
                let g = lu.solve(&op.upper[i]).ok_or_else(|| singular(i))?;
                d = &op.diag[i + 1] - &op.lower[i] * &g;
                gains.push(g);
            } else {
                d = DMatrix::zeros(0, 0);
            }
            if !lu.is_invertible() {
                return Err(singular(i));
            }
            pivots.push(lu);
        }
        let _ = d;
        Ok(Self { m, pivots, gains, lower: op.lower.clone() })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let m = self.m;
        let n = self.pivots.len();
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut r = DVector::from_column_slice(&rhs[i * m..(i + 1) * m]);
            if i > 0 {
                r -= &self.lower[i - 1] * &y[i - 1];
            }
            y.push(self.pivots[i].solve(&r).ok_or_else(|| singular(i))?);
        }
        for i in (0..n - 1).rev() {
            let next = y[i + 1].clone();
            y[i] -= &self.gains[i] * next;
        }
        Ok(y.into_iter().flat_map(|v| v.data.as_vec().clone()).collect())
    }
}

fn singular(i: usize) -> Error {
    Error::SolverFailure { stage: format!("block LU pivot {i}"), residual: f64::INFINITY }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned restarted GMRES; `residual` is the true relative
/// residual `|b - A x| / |b|` at exit.
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Option<&[f64]>,
    restart: usize,
    tol: f64,
    max_iter: usize,
) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    if bnorm == 0.0 {
        return GmresOutcome { x: vec![0.0; n], iterations: 0, residual: 0.0, converged: true };
    }
    let restart = restart.max(1);
    let mut iterations = 0;
    loop {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        if beta / bnorm <= tol || iterations >= max_iter {
            return GmresOutcome { x, iterations, residual: beta / bnorm, converged: beta / bnorm <= tol };
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            let mut w = apply(&precond(&basis[k]));
            for (i, q) in basis.iter().enumerate() {
                h[i][k] = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(a, b)| *a -= h[i][k] * b);
            }
            // second pass keeps the basis orthogonal over long cycles
            for (i, q) in basis.iter().enumerate() {
                let c = dot(&w, q);
                h[i][k] += c;
                w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
            h[k + 1][k] = norm(&w);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let rho = h[k][k].hypot(h[k + 1][k]);
            cs[k] = if rho == 0.0 { 1.0 } else { h[k][k] / rho };
            sn[k] = if rho == 0.0 { 0.0 } else { h[k + 1][k] / rho };
            h[k][k] = rho;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k_used = k + 1;
            let breakdown = norm(&w) == 0.0;
            if !breakdown {
                let hn = norm(&w);
                basis.push(w.iter().map(|v| v / hn).collect());
            }
            if g[k + 1].abs() / bnorm <= 0.1 * tol || breakdown || iterations >= max_iter {
                break;
            }
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut z = vec![0.0; n];
        for (yi, q) in y.iter().zip(&basis) {
            z.iter_mut().zip(q).for_each(|(a, b)| *a += yi * b);
        }
        let dz = precond(&z);
        x.iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
    }
}

struct Factored {
    op: DiscreteTransportOperator,
    lu: OnceLock<Result<BlockLu>>,
    jacobi: OnceLock<Vec<DMatrix<f64>>>,
}

impl Factored {
    fn new(op: DiscreteTransportOperator) -> Self {
        Self { op, lu: OnceLock::new(), jacobi: OnceLock::new() }
    }

    fn lu(&self) -> Result<&BlockLu> {
        match self.lu.get_or_init(|| BlockLu::factor(&self.op)) {
            Ok(lu) => Ok(lu),
            Err(e) => Err(Error::SolverFailure { stage: e.to_string(), residual: f64::INFINITY }),
        }
    }

    fn block_jacobi(&self, r: &[f64]) -> Vec<f64> {
        let inv = self.jacobi.get_or_init(|| {
            self.op
                .diag
                .iter()
                .map(|d| d.clone().try_inverse().unwrap_or_else(|| DMatrix::identity(d.nrows(), d.ncols())))
                .collect()
        });
        let m = self.op.block_size();
        inv.iter()
            .enumerate()
            .flat_map(|(i, b)| {
                let v = b * DVector::from_column_slice(&r[i * m..(i + 1) * m]);
                v.data.as_vec().clone()
            })
            .collect()
    }

    fn solve(&self, rhs: &[f64], opts: &SolverOptions, stage: &str) -> Result<Vec<f64>> {
        let rn = norm(rhs);
        if rn == 0.0 {
            return Ok(vec![0.0; rhs.len()]);
        }
        let residual = |x: &[f64]| {
            let ax = self.op.apply(x);
            norm(&ax.iter().zip(rhs).map(|(a, b)| a - b).collect::<Vec<_>>()) / rn
        };
        if opts.kind == SolverKind::Gmres {
            let out = gmres(
                |v| self.op.apply(v),
                |v| self.block_jacobi(v),
                rhs,
                None,
                opts.restart,
                opts.tol,
                opts.max_iter,
            );
            if out.converged {
                return Ok(out.x);
            }
        }
        let lu = self.lu()?;
        let mut x = lu.solve(rhs)?;
        let mut res = residual(&x);
        for _ in 0..3 {
            if res <= opts.tol {
                break;
            }
            let ax = self.op.apply(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let dx = lu.solve(&r)?;
            x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            res = residual(&x);
        }
        if res > opts.tol {
            return Err(Error::SolverFailure { stage: stage.to_string(), residual: res });
        }
        Ok(x)
    }
}

/// A problem with its assembled operator; factorizations are built on
/// first use and shared by every later solve, including concurrent ones.
pub struct TransportSolver {
    problem: TransportProblem,
    options: SolverOptions,
    forward: Factored,
    transposed: OnceLock<Factored>,
}

impl TransportSolver {
    pub fn new(problem: &TransportProblem, options: SolverOptions) -> Result<Self> {
        Self::with_right_end(problem, options, RightEnd::Inflow)
    }

    pub fn with_right_end(problem: &TransportProblem, options: SolverOptions, right: RightEnd) -> Result<Self> {
        let problem = TransportProblem::new(
            problem.grid.clone(),
            problem.quad.clone(),
            problem.sigma_s.clone(),
            problem.sigma_a.clone(),
            problem.kn,
        )?;
        let op = DiscreteTransportOperator::build(&problem, Direction::Forward, right);
        Ok(Self { problem, options, forward: Factored::new(op), transposed: OnceLock::new() })
    }

    pub fn problem(&self) -> &TransportProblem {
        &self.problem
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn operator(&self) -> &DiscreteTransportOperator {
        &self.forward.op
    }

    fn finish(&self, u: Vec<f64>, direction: Direction) -> TransportSolution {
        let w = self.forward.op.odd_part(&u);
        TransportSolution::from_parts(&self.problem.grid, &self.problem.quad, u, &w, direction)
    }

    /// Even part for the given inflow data.
    pub fn solve_even(&self, inflow: &BoundaryData, stage: &str) -> Result<Vec<f64>> {
        let rhs = self.forward.op.rhs(inflow)?;
        self.forward.solve(&rhs, &self.options, stage)
    }

    pub fn forward(&self, inflow: &BoundaryData) -> Result<TransportSolution> {
        let u = self.solve_even(inflow, "forward solve")?;
        Ok(self.finish(u, Direction::Forward))
    }

    pub fn adjoint(&self, data: &BoundaryData, mode: AdjointMode) -> Result<TransportSolution> {
        let u = match mode {
            AdjointMode::Continuous => self.solve_even(data, "adjoint solve")?,
            AdjointMode::Algebraic => {
                let t = self.transposed.get_or_init(|| Factored::new(self.forward.op.transpose()));
                // The functional sum omega mu psi f_out, written in the even
                // unknowns, is 2 omega mu psi at the boundary nodes.
                let mut c = t.op.rhs(data)?;
                c.iter_mut().for_each(|v| *v *= 2.0);
                let y = t.solve(&c, &self.options, "algebraic adjoint solve")?;
                y.into_iter().map(|v| 0.5 * v).collect()
            }
        };
        Ok(self.finish(u, Direction::Backward))
    }

    /// Response to the coefficient perturbation `(d_sigma_s, d_sigma_a)` to
    /// first order: zero inflow and the volumetric source `-dK u0`.
    pub fn linearized(&self, base: &TransportSolution, d_sigma_s: &[f64], d_sigma_a: &[f64]) -> Result<TransportSolution> {
        let n = self.problem.grid.n_x();
        if d_sigma_s.len() != n || d_sigma_a.len() != n {
            return Err(Error::Mismatch("perturbation length differs from grid".into()));
        }
        let src: Vec<f64> = self
            .forward
            .op
            .apply_derivative(d_sigma_s, d_sigma_a, base.even_part())
            .into_iter()
            .map(|v| -v)
            .collect();
        let u = self.forward.solve(&src, &self.options, "linearized solve")?;
        // The nodal forcing makes the boundary slopes jump; the traces are
        // pinned by the zero inflow instead, which keeps the outgoing value
        // 2u consistent with the measurement of the even system.
        let mut w = self.forward.op.odd_part(&u);
        let m = self.forward.op.block_size();
        for j in 0..m {
            w[j] = -u[j];
            if self.forward.op.right_end() == RightEnd::Inflow {
                w[(n - 1) * m + j] = u[(n - 1) * m + j];
            }
        }
        Ok(TransportSolution::from_parts(&self.problem.grid, &self.problem.quad, u, &w, Direction::Forward))
    }

    /// Relative residual of an even-part vector for the given rhs.
    pub fn relative_residual(&self, u: &[f64], rhs: &[f64]) -> f64 {
        let ax = self.forward.op.apply(u);
        norm(&ax.iter().zip(rhs).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm(rhs).max(f64::MIN_POSITIVE)
    }
}
