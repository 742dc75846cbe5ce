//! Spectra, condition growth, distinguishability, Green's-product rank,
//! Tikhonov recovery and the kernel-shape diagnostics.

use crate::coeff::CoefficientField;
use crate::diffusion::{greens_functions, InteriorMask};
use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::mesh::SpatialGrid;
use crate::output::{fmt_num, write_rows};
use nalgebra::{DMatrix, DVector};
use std::path::Path;

pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SvdReport {
    /// descending
    pub singular_values: Vec<f64>,
    pub u: DMatrix<f64>,
    /// right singular vectors as columns, over `nodes`
    pub v: DMatrix<f64>,
    pub rank: usize,
    pub tau: f64,
    /// grid columns of the analysed matrix
    pub columns: Vec<usize>,
    pub nodes: Vec<f64>,
}

impl SvdReport {
    /// SVD of a dense matrix, sorted, with signs fixed so each right vector
    /// has a positive entry of largest magnitude.
    pub fn of_matrix(a: &DMatrix<f64>, tau: f64) -> Self {
        let svd = a.clone().svd(true, true);
        let u = svd.u.expect("requested");
        let vt = svd.v_t.expect("requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let mut uu = DMatrix::zeros(a.nrows(), s.len());
        let mut vv = DMatrix::zeros(a.ncols(), s.len());
        for (c, &i) in order.iter().enumerate() {
            let col = vt.row(i).transpose();
            let big = col.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            let sign = if big < 0.0 { -1.0 } else { 1.0 };
            vv.set_column(c, &(col * sign));
            uu.set_column(c, &(u.column(i) * sign));
        }
        let s1 = s.first().cloned().unwrap_or(0.0);
        let rank = s.iter().filter(|&&x| x > tau * s1).count();
        Self {
            singular_values: s,
            u: uu,
            v: vv,
            rank,
            tau,
            columns: (0..a.ncols()).collect(),
            nodes: (0..a.ncols()).map(|i| i as f64).collect(),
        }
    }

    pub fn s(&self, i: usize) -> f64 {
        self.singular_values.get(i).cloned().unwrap_or(0.0)
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&DVector::from_vec(self.singular_values.clone())) * self.v.transpose()
    }

    /// Number of singular values above `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.singular_values.iter().filter(|&&x| x > threshold).count()
    }

    pub fn write_values_csv(&self, path: &Path) -> Result<()> {
        let rows = self.singular_values.iter().enumerate().map(|(i, s)| vec![(i + 1).to_string(), fmt_num(*s)]);
        write_rows(path, &["index", "singular_value"], rows)
    }

    pub fn write_vectors_csv(&self, path: &Path) -> Result<()> {
        let k = self.v.ncols().min(3);
        let rows = (0..self.v.nrows()).map(|i| {
            let mut r = vec![fmt_num(self.nodes[i])];
            r.extend((0..3).map(|c| if c < k { fmt_num(self.v[(i, c)]) } else { String::new() }));
            r
        });
        write_rows(path, &["x", "v1", "v2", "v3"], rows)
    }
}

/// SVD of `A` or of its columns inside `interior`.
pub fn svd_report(a: &KernelMatrix, interior: Option<&InteriorMask>, tau: f64) -> SvdReport {
    let columns: Vec<usize> = match interior {
        Some(m) => m.indices.clone(),
        None => (0..a.n_cols()).collect(),
    };
    let mut rep = SvdReport::of_matrix(&a.columns(&columns), tau);
    rep.nodes = columns.iter().map(|&i| a.nodes[i]).collect();
    rep.columns = columns;
    rep
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConditionRow {
    pub kn: f64,
    /// `(s_1 / s_min)^2`, infinite when `s_min` is below the roundoff floor
    pub cond: f64,
    pub cond_is_finite: bool,
    /// `(s_1 / s_{k+1})^2` for the rank cut `k`
    pub effective_cond: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConditionTable {
    pub rows: Vec<ConditionRow>,
    pub rank_cut: usize,
    /// least-squares slope of log cond against log(1/Kn); `None` if any
    /// entry is infinite
    pub slope: Option<f64>,
    pub effective_slope: f64,
}

fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn condition_of(rep: &SvdReport, rank_cut: usize) -> (f64, bool, f64) {
    let s1 = rep.s(0);
    let smin = rep.singular_values.last().cloned().unwrap_or(0.0);
    let dim = rep.u.nrows().max(rep.v.nrows()) as f64;
    let finite = smin > s1 * f64::EPSILON * dim;
    let cond = if finite { (s1 / smin).powi(2) } else { f64::INFINITY };
    let cut = rep.s(rank_cut);
    let eff = if cut > 0.0 { (s1 / cut).powi(2) } else { f64::INFINITY };
    (cond, finite, eff)
}

/// Condition numbers of `A^T A` along a Kn sweep.
pub fn condition_growth(sweep: &[(f64, &SvdReport)], rank_cut: usize) -> Result<ConditionTable> {
    if sweep.len() < 2 {
        return Err(Error::Config("condition growth needs at least two Kn values".into()));
    }
    let rows: Vec<ConditionRow> = sweep
        .iter()
        .map(|(kn, rep)| {
            let (cond, cond_is_finite, effective_cond) = condition_of(rep, rank_cut);
            ConditionRow { kn: *kn, cond, cond_is_finite, effective_cond }
        })
        .collect();
    let inv: Vec<f64> = rows.iter().map(|r| 1.0 / r.kn).collect();
    let slope = rows
        .iter()
        .all(|r| r.cond_is_finite)
        .then(|| loglog_slope(&inv, &rows.iter().map(|r| r.cond).collect::<Vec<_>>()));
    let effective_slope = loglog_slope(&inv, &rows.iter().map(|r| r.effective_cond).collect::<Vec<_>>());
    Ok(ConditionTable { rows, rank_cut, slope, effective_slope })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DistinguishabilityReport {
    pub delta: f64,
    /// `None` (JSON null) when `A` is not injective
    pub kappa_hat: Option<f64>,
    pub smin: f64,
    pub norm_sigma: f64,
    #[serde(skip)]
    pub worst_perturbation: Vec<f64>,
    #[serde(skip)]
    pub worst_max_norm: f64,
}

impl DistinguishabilityReport {
    pub fn kappa(&self) -> f64 {
        self.kappa_hat.unwrap_or(f64::INFINITY)
    }
}

/// Largest `|c| / |s|` with `|A c| <= delta`: the minimal right singular
/// direction scaled to the constraint.
pub fn estimate_distinguishability(a: &DMatrix<f64>, sigma_tilde: &[f64], delta: f64) -> Result<DistinguishabilityReport> {
    let norm_sigma = sigma_tilde.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_sigma == 0.0 {
        return Err(Error::Degenerate("reference perturbation is zero".into()));
    }
    if !(delta >= 0.0) {
        return Err(Error::Config(format!("delta must be nonnegative, got {delta}")));
    }
    let n = a.ncols();
    let rep = SvdReport::of_matrix(a, RANK_TOL);
    // a wide matrix has a null space
    let smin = if a.nrows() < n { 0.0 } else { rep.singular_values.last().cloned().unwrap_or(0.0) };
    let injective = smin > rep.s(0) * f64::EPSILON * n as f64;
    if delta == 0.0 {
        return Ok(DistinguishabilityReport {
            delta,
            kappa_hat: Some(0.0),
            smin,
            norm_sigma,
            worst_perturbation: vec![0.0; n],
            worst_max_norm: 0.0,
        });
    }
    if !injective {
        return Ok(DistinguishabilityReport {
            delta,
            kappa_hat: None,
            smin,
            norm_sigma,
            worst_perturbation: vec![f64::INFINITY; n],
            worst_max_norm: f64::INFINITY,
        });
    }
    let vmin = rep.v.column(rep.v.ncols() - 1);
    let worst: Vec<f64> = vmin.iter().map(|v| delta / smin * v).collect();
    let worst_max_norm = worst.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(DistinguishabilityReport {
        delta,
        kappa_hat: Some(delta / (smin * norm_sigma)),
        smin,
        norm_sigma,
        worst_perturbation: worst,
        worst_max_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreensMode {
    /// rows `rho_f rho_g`
    DiffusionProducts,
    /// rows `rho_f' rho_g'`
    GradientProducts,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RankReport {
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub rank_at_most_3: bool,
    pub tau: f64,
}

/// Deterministic boundary-data pairs `((a1, a2), (b1, b2))` spread over the
/// circle by golden-angle steps.
pub fn boundary_pairs(n: usize) -> Vec<([f64; 2], [f64; 2])> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let t = golden * (2 * i + 1) as f64;
            let s = golden * (2 * i + 2) as f64 + 0.5;
            ([t.cos(), t.sin()], [s.cos(), s.sin()])
        })
        .collect()
}

fn nodal_derivative(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (f[b] - f[a]) / (x[b] - x[a])
        })
        .collect()
}

pub fn greens_rank_check(
    sigma_s: &CoefficientField,
    sigma_a: &CoefficientField,
    grid: &SpatialGrid,
    mode: GreensMode,
    pairs: &[([f64; 2], [f64; 2])],
) -> Result<RankReport> {
    if pairs.is_empty() {
        return Err(Error::Config("need at least one boundary-data pair".into()));
    }
    let gp = greens_functions(sigma_s, sigma_a, grid)?;
    let x = grid.nodes();
    let (g1, g2) = match mode {
        GreensMode::DiffusionProducts => (gp.g1.values().to_vec(), gp.g2.values().to_vec()),
        GreensMode::GradientProducts => (nodal_derivative(x, gp.g1.values()), nodal_derivative(x, gp.g2.values())),
    };
    let m = DMatrix::from_fn(pairs.len(), x.len(), |p, i| {
        let (a, b) = pairs[p];
        (a[0] * g1[i] + a[1] * g2[i]) * (b[0] * g1[i] + b[1] * g2[i])
    });
    let s: Vec<f64> = {
        let mut v: Vec<f64> = m.singular_values().iter().cloned().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    };
    let s1 = s[0];
    let rank = s.iter().filter(|&&x| x > RANK_TOL * s1).count();
    let s4 = s.get(3).cloned().unwrap_or(0.0);
    Ok(RankReport { singular_values: s, rank, rank_at_most_3: s4 <= RANK_TOL * s1, tau: RANK_TOL })
}

/// Minimizer of `|A s - b|^2 + lambda |s|^2` by SVD filter factors.
pub fn tikhonov_reconstruct(a: &DMatrix<f64>, b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    tikhonov_with(&SvdReport::of_matrix(a, RANK_TOL), b, lambda)
}

/// As [`tikhonov_reconstruct`] with a precomputed decomposition, for sweeps.
pub fn tikhonov_with(rep: &SvdReport, b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if b.len() != rep.u.nrows() {
        return Err(Error::Mismatch(format!("b has {} entries for {} rows", b.len(), rep.u.nrows())));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be nonnegative, got {lambda}")));
    }
    let n = rep.v.nrows();
    let s1 = rep.s(0);
    let smin = if rep.u.nrows() < n { 0.0 } else { rep.singular_values.last().cloned().unwrap_or(0.0) };
    if lambda == 0.0 && smin <= s1 * f64::EPSILON * n as f64 {
        return Err(Error::Degenerate("lambda = 0 with a singular matrix".into()));
    }
    let bt = rep.u.tr_mul(&DVector::from_column_slice(b));
    let coef: DVector<f64> = DVector::from_fn(rep.singular_values.len(), |i, _| {
        let s = rep.singular_values[i];
        if s == 0.0 {
            0.0
        } else {
            s / (s * s + lambda) * bt[i]
        }
    });
    Ok((&rep.v * coef).data.as_vec().clone())
}

/// `11` log-spaced values per decade between `lo` and `hi` (inclusive).
pub fn lambda_grid(lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    let n = ((b - a) * 10.0).round() as usize;
    (0..=n).map(|i| 10f64.powf(a + (b - a) * i as f64 / n.max(1) as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RecoveryReport {
    pub best_lambda: f64,
    /// weighted L2 error relative to the truth
    pub best_error: f64,
    pub errors: Vec<(f64, f64)>,
    #[serde(skip)]
    pub best: Vec<f64>,
}

/// Tikhonov over a relative lambda grid `{lo..hi} * s_1^2`, scored against
/// a known truth with quadrature weights.
pub fn tikhonov_sweep(a: &DMatrix<f64>, b: &[f64], truth: &[f64], weights: &[f64], lo: f64, hi: f64) -> Result<RecoveryReport> {
    let rep = SvdReport::of_matrix(a, RANK_TOL);
    let s1sq = rep.s(0).powi(2);
    let wnorm = |v: &[f64]| v.iter().zip(weights).map(|(x, w)| w * x * x).sum::<f64>().sqrt();
    let tn = wnorm(truth);
    let mut best = (f64::NAN, f64::INFINITY, Vec::new());
    let mut errors = Vec::new();
    for rel in lambda_grid(lo, hi) {
        let lambda = rel * s1sq;
        let s = tikhonov_with(&rep, b, lambda)?;
        let diff: Vec<f64> = s.iter().zip(truth).map(|(a, b)| a - b).collect();
        let e = wnorm(&diff) / tn;
        errors.push((rel, e));
        if e < best.1 {
            best = (rel, e, s);
        }
    }
    Ok(RecoveryReport { best_lambda: best.0, best_error: best.1, errors, best: best.2 })
}

/// `max |gamma - mean| / |mean|`.
pub fn flatness_check(gamma: &[f64]) -> Result<f64> {
    let mean = gamma.iter().sum::<f64>() / gamma.len() as f64;
    let scale = gamma.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if mean == 0.0 || mean.abs() <= 1e-300 * scale.max(1.0) {
        return Err(Error::Degenerate("kernel row has zero mean".into()));
    }
    Ok(gamma.iter().map(|g| (g - mean).abs()).fold(0.0, f64::max) / mean.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub indices: Vec<usize>,
    /// `(d gamma/dx) / (d(rho_f rho_g)/dx)`
    pub ratio: Vec<f64>,
    /// `Kn / (Kn^2 + sigma_s0 / sigma_a)`
    pub predicted: Vec<f64>,
}

impl RatioReport {
    pub fn max_relative_error(&self) -> f64 {
        self.ratio
            .iter()
            .zip(&self.predicted)
            .map(|(r, p)| ((r - p) / p).abs())
            .fold(0.0, f64::max)
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Centered-difference ratio on interior nodes, dropping nodes where
/// `|d(rho_f rho_g)/dx| < 1e-6 max`.
#[allow(clippy::too_many_arguments)]
pub fn ratio_check(
    nodes: &[f64],
    gamma: &[f64],
    rho_f: &[f64],
    rho_g: &[f64],
    sigma_s0: &[f64],
    sigma_a: &[f64],
    kn: f64,
    mask: &InteriorMask,
) -> Result<RatioReport> {
    let n = nodes.len();
    if [gamma.len(), rho_f.len(), rho_g.len(), sigma_s0.len(), sigma_a.len()].iter().any(|&l| l != n) {
        return Err(Error::Mismatch("ratio inputs differ in length".into()));
    }
    let prod: Vec<f64> = rho_f.iter().zip(rho_g).map(|(a, b)| a * b).collect();
    let centered = |f: &[f64], i: usize| (f[i + 1] - f[i - 1]) / (nodes[i + 1] - nodes[i - 1]);
    let inner: Vec<usize> = mask.indices.iter().cloned().filter(|&i| i > 0 && i + 1 < n).collect();
    let dp: Vec<f64> = inner.iter().map(|&i| centered(&prod, i)).collect();
    let floor = 1e-6 * dp.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rep = RatioReport { indices: vec![], ratio: vec![], predicted: vec![] };
    for (&i, d) in inner.iter().zip(&dp) {
        if d.abs() < floor || d.abs() == 0.0 {
            continue;
        }
        if sigma_a[i] <= 0.0 {
            return Err(Error::Degenerate("ratio identity needs sigma_a > 0".into()));
        }
        rep.indices.push(i);
        rep.ratio.push(centered(gamma, i) / d);
        rep.predicted.push(kn / (kn * kn + sigma_s0[i] / sigma_a[i]));
    }
    if rep.indices.is_empty() {
        return Err(Error::EmptyInterior("no node passes the derivative floor".into()));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outer_product_has_rank_one() {
        let u = DVector::from_fn(6, |i, _| (i as f64 + 1.0).sin());
        let v = DVector::from_fn(9, |i, _| 1.0 + i as f64);
        let rep = SvdReport::of_matrix(&(&u * v.transpose()), RANK_TOL);
        assert_eq!(rep.rank, 1);
    }

    #[test]
    fn identity_is_perfectly_conditioned() {
        let rep = SvdReport::of_matrix(&DMatrix::identity(5, 5), RANK_TOL);
        let (c, finite, _) = condition_of(&rep, 3);
        assert!(finite && (c - 1.0).abs() < 1e-14);
        let d = estimate_distinguishability(&DMatrix::identity(4, 4), &[1.0, 0.0, 0.0, 0.0], 0.1).unwrap();
        assert!((d.kappa() - 0.1).abs() < 1e-14);
    }

    #[test]
    fn wide_matrices_are_not_injective() {
        let a = DMatrix::from_fn(5, 8, |i, j| ((i * 8 + j) as f64).cos());
        let d = estimate_distinguishability(&a, &[1.0; 8], 0.1).unwrap();
        assert!(d.kappa_hat.is_none());
        assert!(tikhonov_reconstruct(&a, &[1.0; 5], 0.0).is_err());
    }

    #[test]
    fn constant_profile_is_flat() {
        assert_eq!(flatness_check(&[2.0; 7]).unwrap(), 0.0);
        assert!(flatness_check(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn lambda_grid_has_eleven_per_decade() {
        let g = lambda_grid(1e-3, 1e-2);
        assert_eq!(g.len(), 11);
        assert!((g[0] - 1e-3).abs() < 1e-18 && (g[10] - 1e-2).abs() < 1e-17);
    }
}
