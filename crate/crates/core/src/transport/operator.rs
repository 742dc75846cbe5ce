use super::cell::{Cell, HalfRange};
use super::{BoundaryData, Direction, TransportProblem};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;

/// Treatment of the right end. Only the half-space solve uses the closures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RightEnd {
    Inflow,
    /// f(1, -mu) = f(1, mu)
    Specular,
    /// f(1, -mu) = half-range average of the outgoing values
    AverageMatching,
}

/// The assembled even-parity system `K u = r`.
///
/// Unknowns are the nodal even parts `u(x_i, mu_j)`, ordered node-major
/// (`i * m + j`), which makes `K` block tridiagonal with `m x m` blocks.
/// Inflow data enter the two boundary blocks as Robin terms
/// `omega_j mu_j (u - phi)`.
#[derive(Debug, Clone)]
pub struct DiscreteTransportOperator {
    pub(crate) direction: Direction,
    pub(crate) kn: f64,
    pub(crate) n_x: usize,
    pub(crate) half: HalfRange,
    pub(crate) cells: Vec<Cell>,
    pub(crate) right: RightEnd,
    pub(crate) diag: Vec<DMatrix<f64>>,
    /// block (i, i+1)
    pub(crate) upper: Vec<DMatrix<f64>>,
    /// block (i+1, i)
    pub(crate) lower: Vec<DMatrix<f64>>,
}

pub(crate) fn cell_values(node: &[f64]) -> Vec<f64> {
    node.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

impl DiscreteTransportOperator {
    pub(crate) fn build(problem: &TransportProblem, direction: Direction, right: RightEnd) -> Self {
        let quad = &problem.quad;
        let half = HalfRange::new(quad.mu(), quad.omega());
        let m = half.m();
        let n = problem.grid.n_x();
        let nodes = problem.grid.nodes();
        let ss = cell_values(problem.sigma_s.values());
        let sa = cell_values(problem.sigma_a.values());
        let cells: Vec<Cell> = (0..n - 1)
            .into_par_iter()
            .map(|c| Cell::new(ss[c], sa[c], problem.kn, nodes[c + 1] - nodes[c], &half))
            .collect();
        let elems: Vec<_> = cells.par_iter().map(|c| c.element(&half)).collect();
        let mut diag = vec![DMatrix::zeros(m, m); n];
        let mut upper = Vec::with_capacity(n - 1);
        let mut lower = Vec::with_capacity(n - 1);
        for (c, (ea, eb)) in elems.into_iter().enumerate() {
            diag[c] += &ea;
            diag[c + 1] += &ea;
            upper.push(-eb.clone());
            lower.push(-eb.transpose());
        }
        for j in 0..m {
            diag[0][(j, j)] += half.omega[j] * half.mu[j];
        }
        match right {
            RightEnd::Inflow => {
                for j in 0..m {
                    diag[n - 1][(j, j)] += half.omega[j] * half.mu[j];
                }
            }
            RightEnd::Specular => {}
            RightEnd::AverageMatching => {
                for j in 0..m {
                    let om = half.omega[j] * half.mu[j];
                    for k in 0..m {
                        let d = if j == k { 1.0 } else { 0.0 };
                        diag[n - 1][(j, k)] += om * (d - 2.0 * half.omega[k]);
                    }
                }
            }
        }
        Self { direction, kn: problem.kn, n_x: n, half, cells, right, diag, upper, lower }
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    /// Ordinates per node in the even-parity system (`n_v / 2`).
    pub fn block_size(&self) -> usize {
        self.half.m()
    }

    pub fn dim(&self) -> usize {
        self.n_x * self.half.m()
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn right_end(&self) -> RightEnd {
        self.right
    }

    pub fn transpose(&self) -> Self {
        let mut t = self.clone();
        t.diag = self.diag.iter().map(|d| d.transpose()).collect();
        t.upper = self.lower.iter().map(|b| b.transpose()).collect();
        t.lower = self.upper.iter().map(|b| b.transpose()).collect();
        t
    }

    /// Right-hand side for boundary data. For the backward direction the
    /// data are the prescribed adjoint values on the outgoing half-ranges,
    /// which play the role of inflow for the reversed equation.
    pub fn rhs(&self, data: &BoundaryData) -> Result<Vec<f64>> {
        let m = self.half.m();
        if data.left.len() != m || data.right.len() != m {
            return Err(Error::Mismatch(format!(
                "boundary data needs {m} values per end, got {} and {}",
                data.left.len(),
                data.right.len()
            )));
        }
        let mut r = vec![0.0; self.dim()];
        for j in 0..m {
            let om = self.half.omega[j] * self.half.mu[j];
            r[j] = om * data.left[j];
            if self.right == RightEnd::Inflow {
                r[(self.n_x - 1) * m + j] = om * data.right[j];
            }
        }
        Ok(r)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.half.m();
        let n = self.n_x;
        let mut y = vec![0.0; n * m];
        y.par_chunks_mut(m).enumerate().for_each(|(i, yi)| {
            let mut acc = nalgebra::DVector::zeros(m);
            let xi = nalgebra::DVectorView::from_slice(&x[i * m..(i + 1) * m], m);
            acc.gemv(1.0, &self.diag[i], &xi, 0.0);
            if i + 1 < n {
                let xn = nalgebra::DVectorView::from_slice(&x[(i + 1) * m..(i + 2) * m], m);
                acc.gemv(1.0, &self.upper[i], &xn, 1.0);
            }
            if i > 0 {
                let xp = nalgebra::DVectorView::from_slice(&x[(i - 1) * m..i * m], m);
                acc.gemv(1.0, &self.lower[i - 1], &xp, 1.0);
            }
            yi.copy_from_slice(acc.as_slice());
        });
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.half.m();
        let mut a = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.n_x {
            a.view_mut((i * m, i * m), (m, m)).copy_from(&self.diag[i]);
            if i + 1 < self.n_x {
                a.view_mut((i * m, (i + 1) * m), (m, m)).copy_from(&self.upper[i]);
                a.view_mut(((i + 1) * m, i * m), (m, m)).copy_from(&self.lower[i]);
            }
        }
        a
    }

    /// `(dK)[d_sigma] u` for nodal coefficient perturbations. Cell values
    /// are node averages, so each cell moves by the mean of its two nodes.
    pub fn apply_derivative(&self, d_sigma_s: &[f64], d_sigma_a: &[f64], u: &[f64]) -> Vec<f64> {
        let m = self.half.m();
        let ds = cell_values(d_sigma_s);
        let da = cell_values(d_sigma_a);
        let parts: Vec<(Vec<f64>, Vec<f64>)> = self
            .cells
            .par_iter()
            .enumerate()
            .map(|(c, cell)| {
                if ds[c] == 0.0 && da[c] == 0.0 {
                    return (vec![0.0; m], vec![0.0; m]);
                }
                let (dea, deb) = cell.element_derivative(ds[c], da[c], self.kn, &self.half);
                let ul = nalgebra::DVectorView::from_slice(&u[c * m..(c + 1) * m], m);
                let ur = nalgebra::DVectorView::from_slice(&u[(c + 1) * m..(c + 2) * m], m);
                let yl = &dea * ul - &deb * ur;
                let yr = &dea * ur - deb.transpose() * ul;
                (yl.as_slice().to_vec(), yr.as_slice().to_vec())
            })
            .collect();
        let mut y = vec![0.0; self.dim()];
        for (c, (yl, yr)) in parts.into_iter().enumerate() {
            for j in 0..m {
                y[c * m + j] += yl[j];
                y[(c + 1) * m + j] += yr[j];
            }
        }
        y
    }

    /// Nodal odd part `w = -mu u' / sigma'` of the forward-oriented
    /// solution, taken from the cells adjacent to each node.
    pub fn odd_part(&self, u: &[f64]) -> Vec<f64> {
        let m = self.half.m();
        let n = self.n_x;
        let ends: Vec<(Vec<f64>, Vec<f64>)> = self
            .cells
            .par_iter()
            .enumerate()
            .map(|(c, cell)| {
                let (dl, dr) =
                    cell.end_slopes(&u[c * m..(c + 1) * m], &u[(c + 1) * m..(c + 2) * m], &self.half);
                let to_w = |d: Vec<f64>| {
                    d.iter()
                        .zip(&self.half.mu)
                        .map(|(s, mu)| -mu * s / cell.sigma_t)
                        .collect::<Vec<f64>>()
                };
                (to_w(dl), to_w(dr))
            })
            .collect();
        let mut w = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                w[i * m + j] = match (i, i == n - 1) {
                    (0, _) => ends[0].0[j],
                    (_, true) => ends[n - 2].1[j],
                    _ => 0.5 * (ends[i - 1].1[j] + ends[i].0[j]),
                };
            }
        }
        w
    }
}
