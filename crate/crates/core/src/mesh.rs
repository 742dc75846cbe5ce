//! Spatial grids on [0,1] and Gauss-Legendre ordinates on [-1,1].
//!
//! Angular weights are normalized to sum to one, so `sum_j w_j f(v_j)`
//! is the normalized average `<f>` used everywhere else in the crate.

use crate::error::{Error, Result};
use gauss_quad::legendre::GaussLegendre;
use std::num::NonZeroUsize;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl SpatialGrid {
    pub fn uniform(n_x: usize) -> Result<Self> {
        if n_x < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes, got {n_x}")));
        }
        let h = 1.0 / (n_x - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_x).map(|i| i as f64 * h).collect();
        nodes[n_x - 1] = 1.0;
        let mut weights = vec![h; n_x];
        weights[0] = 0.5 * h;
        weights[n_x - 1] = 0.5 * h;
        Ok(Self { nodes, weights })
    }

    pub fn n_x(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Trapezoid weights, halved at the endpoints.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.nodes.len() - 1) as f64
    }

    /// Cell midpoints, one per interval.
    pub fn midpoints(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

pub fn make_uniform_grid(n_x: usize) -> Result<SpatialGrid> {
    SpatialGrid::uniform(n_x)
}

/// Symmetric ordinate set, stored in increasing order of `v`.
///
/// The first `n_v/2` ordinates are negative; ordinate `m + j` equals
/// `-(ordinate m - 1 - j)`, where `m = n_v/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularQuadrature {
    ordinates: Vec<f64>,
    weights: Vec<f64>,
}

impl AngularQuadrature {
    pub fn gauss_legendre(n_v: usize) -> Result<Self> {
        if n_v < 2 || n_v % 2 != 0 {
            return Err(Error::InvalidQuadrature(format!(
                "n_v must be even and at least 2 (v = 0 is not allowed), got {n_v}"
            )));
        }
        let rule = GaussLegendre::new(NonZeroUsize::new(n_v).expect("n_v > 0"));
        let mut pairs: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Mirror the positive half so the rule is symmetric to the last bit.
        let m = n_v / 2;
        let mut mu = vec![0.0; m];
        let mut om = vec![0.0; m];
        for j in 0..m {
            let (xp, wp) = pairs[m + j];
            let (xn, wn) = pairs[m - 1 - j];
            mu[j] = 0.5 * (xp - xn);
            om[j] = 0.25 * (wp + wn);
        }
        let total: f64 = 2.0 * om.iter().sum::<f64>();
        om.iter_mut().for_each(|w| *w /= total);
        Ok(Self::from_half_range(&mu, &om))
    }

    fn from_half_range(mu: &[f64], om: &[f64]) -> Self {
        let m = mu.len();
        let mut ordinates = vec![0.0; 2 * m];
        let mut weights = vec![0.0; 2 * m];
        for j in 0..m {
            ordinates[m + j] = mu[j];
            ordinates[m - 1 - j] = -mu[j];
            weights[m + j] = om[j];
            weights[m - 1 - j] = om[j];
        }
        Self { ordinates, weights }
    }

    pub fn n_v(&self) -> usize {
        self.ordinates.len()
    }

    /// Number of positive ordinates.
    pub fn half(&self) -> usize {
        self.ordinates.len() / 2
    }

    pub fn ordinates(&self) -> &[f64] {
        &self.ordinates
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Positive ordinates mu_j in increasing order.
    pub fn mu(&self) -> &[f64] {
        &self.ordinates[self.half()..]
    }

    /// Weights of the positive ordinates.
    pub fn omega(&self) -> &[f64] {
        &self.weights[self.half()..]
    }

    /// Index of `+mu_j`.
    pub fn pos_index(&self, j: usize) -> usize {
        self.half() + j
    }

    /// Index of `-mu_j`.
    pub fn neg_index(&self, j: usize) -> usize {
        self.half() - 1 - j
    }

    pub fn average(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.ordinates
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * f(*v))
            .sum()
    }
}

pub fn make_gauss_quadrature(n_v: usize) -> Result<AngularQuadrature> {
    AngularQuadrature::gauss_legendre(n_v)
}
