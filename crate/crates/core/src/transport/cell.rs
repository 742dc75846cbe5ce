//! One spatial cell with constant coefficients.
//!
//! Inside a cell the even part `u_j = (f(+mu_j) + f(-mu_j))/2` of the
//! discrete-ordinates solution solves the linear ODE system
//! `u'' = M u`, `M = s' D^-2 (s' I - c 1 (2 omega)^T)`, where
//! `s' = sigma_s/Kn + Kn sigma_a` and `c = sigma_s/Kn`. With
//! `T = diag(sqrt(2 omega) mu)` the matrix `H = T M T^-1` is symmetric
//! positive semidefinite, `H = Q diag(lambda) Q^T`. In modal coordinates
//! `z = Q^T T u` each mode is `sinh`-interpolated between the cell ends, so
//! the end values determine the whole cell solution exactly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

#[derive(Debug, Clone)]
pub(crate) struct HalfRange {
    pub mu: Vec<f64>,
    pub omega: Vec<f64>,
    /// sqrt(2 omega_j) mu_j
    pub t: Vec<f64>,
    /// sqrt(2 omega_j) / mu_j
    pub r: Vec<f64>,
}

impl HalfRange {
    pub fn new(mu: &[f64], omega: &[f64]) -> Self {
        let t = mu.iter().zip(omega).map(|(m, w)| (2.0 * w).sqrt() * m).collect();
        let r = mu.iter().zip(omega).map(|(m, w)| (2.0 * w).sqrt() / m).collect();
        Self { mu: mu.to_vec(), omega: omega.to_vec(), t, r }
    }

    pub fn m(&self) -> usize {
        self.mu.len()
    }
}

// x coth x and x csch x as power series in y = x^2.
const COTH_SERIES: [f64; 6] = [
    1.0,
    1.0 / 3.0,
    -1.0 / 45.0,
    2.0 / 945.0,
    -1.0 / 4725.0,
    2.0 / 93555.0,
];
const CSCH_SERIES: [f64; 6] = [
    1.0,
    -1.0 / 6.0,
    7.0 / 360.0,
    -31.0 / 15120.0,
    127.0 / 604800.0,
    -73.0 / 3421440.0,
];
const SERIES_LIMIT: f64 = 0.1;

fn series(c: &[f64; 6], y: f64) -> (f64, f64) {
    let mut v = 0.0;
    let mut d = 0.0;
    for n in (0..6).rev() {
        v = v * y + c[n];
        if n > 0 {
            d = d * y + n as f64 * c[n];
        }
    }
    (v, d)
}

/// `(nu coth(nu h), nu csch(nu h))` with `nu = sqrt(lambda)`.
pub(crate) fn stiffness_pair(lambda: f64, h: f64) -> (f64, f64) {
    let x = lambda.max(0.0).sqrt() * h;
    if x < SERIES_LIMIT {
        let y = lambda * h * h;
        return (series(&COTH_SERIES, y).0 / h, series(&CSCH_SERIES, y).0 / h);
    }
    let nu = x / h;
    let e2 = (-2.0 * x).exp();
    let den = -(-2.0 * x).exp_m1();
    (nu * (1.0 + e2) / den, 2.0 * nu * (-x).exp() / den)
}

/// Derivatives of [`stiffness_pair`] with respect to `lambda`.
pub(crate) fn stiffness_pair_deriv(lambda: f64, h: f64) -> (f64, f64) {
    let x = lambda.max(0.0).sqrt() * h;
    if x < SERIES_LIMIT {
        let y = lambda * h * h;
        return (series(&COTH_SERIES, y).1 * h, series(&CSCH_SERIES, y).1 * h);
    }
    let nu = x / h;
    let den = -(-2.0 * x).exp_m1();
    let coth = (1.0 + (-2.0 * x).exp()) / den;
    let csch = 2.0 * (-x).exp() / den;
    ((coth - x * csch * csch) / (2.0 * nu), (csch - x * csch * coth) / (2.0 * nu))
}

#[derive(Debug, Clone)]
pub(crate) struct Cell {
    pub h: f64,
    pub sigma_t: f64,
    pub sigma_c: f64,
    pub lambda: Vec<f64>,
    pub q: DMatrix<f64>,
    pub fa: Vec<f64>,
    pub fb: Vec<f64>,
}

fn sym_h(half: &HalfRange, sigma_t: f64, sigma_c: f64, d_t: f64, d_c: f64) -> DMatrix<f64> {
    // Derivative of s'(s' D^-2 - c r r^T) along (d_t, d_c).
    let m = half.m();
    DMatrix::from_fn(m, m, |j, k| {
        let diag = if j == k { 1.0 / (half.mu[j] * half.mu[j]) } else { 0.0 };
        let rr = half.r[j] * half.r[k];
        d_t * (sigma_t * diag - sigma_c * rr) + sigma_t * (d_t * diag - d_c * rr)
    })
}

impl Cell {
    pub fn new(sigma_s: f64, sigma_a: f64, kn: f64, h: f64, half: &HalfRange) -> Self {
        let sigma_c = sigma_s / kn;
        let sigma_t = sigma_c + kn * sigma_a;
        let m = half.m();
        let hm = DMatrix::from_fn(m, m, |j, k| {
            let diag = if j == k { sigma_t / (half.mu[j] * half.mu[j]) } else { 0.0 };
            sigma_t * (diag - sigma_c * half.r[j] * half.r[k])
        });
        let eig = SymmetricEigen::new(hm);
        let lambda: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        let (fa, fb) = lambda.iter().map(|&l| stiffness_pair(l, h)).unzip();
        Self { h, sigma_t, sigma_c, lambda, q: eig.eigenvectors, fa, fb }
    }

    pub fn nu_max(&self) -> f64 {
        self.lambda.iter().cloned().fold(0.0, f64::max).sqrt()
    }

    fn scaled_function(&self, f: &[f64], half: &HalfRange) -> DMatrix<f64> {
        let m = half.m();
        let mut qf = self.q.clone();
        for (k, fk) in f.iter().enumerate() {
            qf.column_mut(k).scale_mut(*fk);
        }
        let g = &qf * self.q.transpose();
        DMatrix::from_fn(m, m, |j, k| half.t[j] * half.t[k] * g[(j, k)] / (2.0 * self.sigma_t))
    }

    /// Element blocks `(E_a, E_b)`: the cell adds `E_a` to both diagonal
    /// blocks and `-E_b` to both coupling blocks.
    pub fn element(&self, half: &HalfRange) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.scaled_function(&self.fa, half), self.scaled_function(&self.fb, half))
    }

    /// Derivative of [`Cell::element`] when the cell coefficients move by
    /// `(d_sigma_s, d_sigma_a)`.
    pub fn element_derivative(
        &self,
        d_sigma_s: f64,
        d_sigma_a: f64,
        kn: f64,
        half: &HalfRange,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let m = half.m();
        let d_c = d_sigma_s / kn;
        let d_t = d_c + kn * d_sigma_a;
        let dh = sym_h(half, self.sigma_t, self.sigma_c, d_t, d_c);
        let g = self.q.transpose() * dh * &self.q;
        let mut out = Vec::with_capacity(2);
        for which in 0..2 {
            let f = if which == 0 { &self.fa } else { &self.fb };
            let pick = |p: (f64, f64)| if which == 0 { p.0 } else { p.1 };
            let mut l = DMatrix::zeros(m, m);
            for i in 0..m {
                for k in 0..m {
                    let (li, lk) = (self.lambda[i], self.lambda[k]);
                    let gap = li - lk;
                    let scale = li.abs().max(lk.abs()).max(f64::MIN_POSITIVE);
                    l[(i, k)] = if gap.abs() <= 1e-5 * scale {
                        pick(stiffness_pair_deriv(0.5 * (li + lk), self.h))
                    } else {
                        (f[i] - f[k]) / gap
                    };
                }
            }
            let df = &self.q * l.component_mul(&g) * self.q.transpose();
            let fm = self.scaled_function(f, half);
            let s = 2.0 * self.sigma_t;
            out.push(DMatrix::from_fn(m, m, |j, k| {
                half.t[j] * half.t[k] * df[(j, k)] / s - d_t / self.sigma_t * fm[(j, k)]
            }));
        }
        let eb = out.pop().unwrap();
        let ea = out.pop().unwrap();
        (ea, eb)
    }

    /// Modal coordinates `z = Q^T T u` of an end value.
    pub fn modal(&self, u: &[f64], half: &HalfRange) -> DVector<f64> {
        let tu = DVector::from_iterator(u.len(), u.iter().zip(&half.t).map(|(a, t)| a * t));
        self.q.tr_mul(&tu)
    }

    /// `du/dx` at the left and right ends given the end values.
    pub fn end_slopes(&self, ul: &[f64], ur: &[f64], half: &HalfRange) -> (Vec<f64>, Vec<f64>) {
        let zl = self.modal(ul, half);
        let zr = self.modal(ur, half);
        let m = half.m();
        let dzl = DVector::from_fn(m, |k, _| -self.fa[k] * zl[k] + self.fb[k] * zr[k]);
        let dzr = DVector::from_fn(m, |k, _| -self.fb[k] * zl[k] + self.fa[k] * zr[k]);
        let back = |dz: DVector<f64>| {
            let v = &self.q * dz;
            v.iter().zip(&half.t).map(|(a, t)| a / t).collect::<Vec<f64>>()
        };
        (back(dzl), back(dzr))
    }
}

/// Interpolating mode shapes on `s in [0, h]`:
/// `sinh(nu (h - s))/sinh(nu h)`, `sinh(nu s)/sinh(nu h)` and their slopes.
pub(crate) fn mode_basis(nu: f64, h: f64, s: f64) -> [f64; 4] {
    let x = nu * h;
    if x < 1e-10 {
        return [1.0 - s / h, s / h, -1.0 / h, 1.0 / h];
    }
    let den = -(-2.0 * x).exp_m1();
    let el = (-nu * s).exp();
    let er = (-nu * (h - s)).exp();
    let pl = el * -(-2.0 * nu * (h - s)).exp_m1() / den;
    let pr = er * -(-2.0 * nu * s).exp_m1() / den;
    let dl = -nu * el * (1.0 + (-2.0 * nu * (h - s)).exp()) / den;
    let dr = nu * er * (1.0 + (-2.0 * nu * s).exp()) / den;
    [pl, pr, dl, dr]
}
