use super::{BoundaryData, Direction, Endpoint};
use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::mesh::{AngularQuadrature, SpatialGrid};
use crate::output::{fmt_num, write_rows};
use std::path::Path;

/// `f(x_i, v_j)` on the tensor grid, node-major, ordinates ascending.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub(crate) nodes: Vec<f64>,
    pub(crate) ordinates: Vec<f64>,
    pub(crate) weights: Vec<f64>,
    pub(crate) values: Vec<f64>,
    /// Even part on the positive ordinates, node-major.
    pub(crate) even: Vec<f64>,
    pub(crate) direction: Direction,
}

impl TransportSolution {
    /// Rebuild `f` from the even part and the forward-oriented odd part.
    pub(crate) fn from_parts(
        grid: &SpatialGrid,
        quad: &AngularQuadrature,
        even: Vec<f64>,
        odd: &[f64],
        direction: Direction,
    ) -> Self {
        let n_v = quad.n_v();
        let m = quad.half();
        let s = match direction {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        };
        let mut values = vec![0.0; grid.n_x() * n_v];
        for i in 0..grid.n_x() {
            for j in 0..m {
                let (u, w) = (even[i * m + j], s * odd[i * m + j]);
                values[i * n_v + quad.pos_index(j)] = u + w;
                values[i * n_v + quad.neg_index(j)] = u - w;
            }
        }
        Self {
            nodes: grid.nodes().to_vec(),
            ordinates: quad.ordinates().to_vec(),
            weights: quad.weights().to_vec(),
            values,
            even,
            direction,
        }
    }

    /// Sample an arbitrary `f(x, v)`; handy for checking the moment helpers.
    pub fn from_fn(grid: &SpatialGrid, quad: &AngularQuadrature, f: impl Fn(f64, f64) -> f64) -> Self {
        let m = quad.half();
        let mut values = Vec::with_capacity(grid.n_x() * quad.n_v());
        let mut even = Vec::with_capacity(grid.n_x() * m);
        for &x in grid.nodes() {
            values.extend(quad.ordinates().iter().map(|&v| f(x, v)));
            even.extend(quad.mu().iter().map(|&mu| 0.5 * (f(x, mu) + f(x, -mu))));
        }
        Self {
            nodes: grid.nodes().to_vec(),
            ordinates: quad.ordinates().to_vec(),
            weights: quad.weights().to_vec(),
            values,
            even,
            direction: Direction::Forward,
        }
    }

    pub fn n_x(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_v(&self) -> usize {
        self.ordinates.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn ordinates(&self) -> &[f64] {
        &self.ordinates
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_v() + j]
    }

    /// All ordinates at node `i`.
    pub fn at_node(&self, i: usize) -> &[f64] {
        let n_v = self.n_v();
        &self.values[i * n_v..(i + 1) * n_v]
    }

    pub fn even_part(&self) -> &[f64] {
        &self.even
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn average(&self) -> CoefficientField {
        CoefficientField::new(
            (0..self.n_x())
                .map(|i| self.at_node(i).iter().zip(&self.weights).map(|(f, w)| f * w).sum())
                .collect(),
        )
    }

    pub fn flux(&self, i: usize) -> f64 {
        self.at_node(i)
            .iter()
            .zip(&self.ordinates)
            .zip(&self.weights)
            .map(|((f, v), w)| w * v * f)
            .sum()
    }

    pub fn measure(&self, end: Endpoint) -> f64 {
        let (i, outgoing): (usize, fn(f64) -> bool) = match end {
            Endpoint::Left => (0, |v| v < 0.0),
            Endpoint::Right => (self.n_x() - 1, |v| v > 0.0),
        };
        self.at_node(i)
            .iter()
            .zip(&self.ordinates)
            .zip(&self.weights)
            .filter(|((_, v), _)| outgoing(**v))
            .map(|((f, v), w)| w * v.abs() * f)
            .sum()
    }

    fn trace(&self, incoming: bool) -> BoundaryData {
        let m = self.n_v() / 2;
        let last = self.n_x() - 1;
        let (l, r): (Box<dyn Fn(usize) -> usize>, Box<dyn Fn(usize) -> usize>) = if incoming {
            (Box::new(|j| m + j), Box::new(|j| m - 1 - j))
        } else {
            (Box::new(|j| m - 1 - j), Box::new(|j| m + j))
        };
        BoundaryData {
            left: (0..m).map(|j| self.value(0, l(j))).collect(),
            right: (0..m).map(|j| self.value(last, r(j))).collect(),
        }
    }

    /// Values on `x = 0, v > 0` and `x = 1, v < 0`.
    pub fn inflow_trace(&self) -> BoundaryData {
        self.trace(true)
    }

    /// Values on `x = 0, v < 0` and `x = 1, v > 0`.
    pub fn outflow_trace(&self) -> BoundaryData {
        self.trace(false)
    }

    pub(crate) fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.nodes != other.nodes || self.ordinates != other.ordinates {
            return Err(Error::Mismatch("solutions live on different grids".into()));
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = (0..self.n_x()).flat_map(|i| {
            (0..self.n_v()).map(move |j| {
                vec![fmt_num(self.nodes[i]), fmt_num(self.ordinates[j]), fmt_num(self.value(i, j))]
            })
        });
        write_rows(path, &["x", "v", "f"], rows)
    }
}
