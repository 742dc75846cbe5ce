//! Linearized kernels `gamma(x; delta_y, phi_d)` and the system `A s = b`.
//!
//! Rows are indexed by (detector k, source d), `p = k * n_sources + d`.
//! For absorption the stored entry is the signed sensitivity of the
//! measurement, `-Kn <f0 g>` times the node weight, so that `A s = b`
//! holds with the sign of `b`. Scattering rows store
//! `(1/Kn)(<f0><g> - <f0 g>)` times the weight.

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::mesh::AngularQuadrature;
use crate::output::{fmt_num, write_rows};
use crate::transport::cell::{mode_basis, Cell, HalfRange};
use crate::transport::{
    AdjointMode, BoundaryData, Endpoint, SolverOptions, TransportProblem, TransportSolution,
    TransportSolver,
};
use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::num::NonZeroUsize;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Absorption,
    ScatteringCritical,
    ScatteringSubcritical,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] =
        [ProblemKind::Absorption, ProblemKind::ScatteringCritical, ProblemKind::ScatteringSubcritical];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Absorption => "absorption",
            ProblemKind::ScatteringCritical => "scattering-critical",
            ProblemKind::ScatteringSubcritical => "scattering-subcritical",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown problem kind '{name}'")))
    }

    pub fn perturbs_absorption(self) -> bool {
        self == ProblemKind::Absorption
    }

    pub fn default_preset(self) -> crate::coeff::Preset {
        use crate::coeff::Preset;
        match self {
            ProblemKind::Absorption => Preset::AbsTest,
            ProblemKind::ScatteringCritical => Preset::ScaCritical,
            ProblemKind::ScatteringSubcritical => Preset::ScaSubcritical,
        }
    }

    /// The background this kind runs on; the critical kind zeroes `sigma_a`.
    pub fn background(self, problem: &TransportProblem) -> Result<TransportProblem> {
        match self {
            ProblemKind::ScatteringCritical => problem.with_coefficients(
                problem.sigma_s.clone(),
                CoefficientField::new(vec![0.0; problem.grid.n_x()]),
            ),
            _ => Ok(problem.clone()),
        }
    }

    /// `(d_sigma_s, d_sigma_a)` for a perturbation of the unknown coefficient.
    fn split<'a>(self, pert: &'a [f64], zero: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        if self.perturbs_absorption() {
            (zero, pert)
        } else {
            (pert, zero)
        }
    }
}

/// `Kn sum_j omega_j f0 g` at each node.
pub fn gamma_absorption(f0: &TransportSolution, g: &TransportSolution, kn: f64) -> Result<CoefficientField> {
    f0.check_same_grid(g)?;
    Ok(CoefficientField::new(
        (0..f0.n_x())
            .map(|i| {
                let s: f64 = f0.at_node(i).iter().zip(g.at_node(i)).zip(f0.weights()).map(|((a, b), w)| w * a * b).sum();
                kn * s
            })
            .collect(),
    ))
}

/// `(1/Kn)(<f0><g> - <f0 g>)` at each node.
pub fn gamma_scattering(f0: &TransportSolution, g: &TransportSolution, kn: f64) -> Result<CoefficientField> {
    f0.check_same_grid(g)?;
    let rf = f0.average();
    let rg = g.average();
    Ok(CoefficientField::new(
        (0..f0.n_x())
            .map(|i| {
                let s: f64 = f0.at_node(i).iter().zip(g.at_node(i)).zip(f0.weights()).map(|((a, b), w)| w * a * b).sum();
                (rf.values()[i] * rg.values()[i] - s) / kn
            })
            .collect(),
    ))
}

/// How a velocity delta `delta(v - v_d)` is turned into ordinate data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaScaling {
    /// `(1/omega_d) e_d`, unit normalized angular integral.
    InverseWeight,
    /// plain `e_d`
    Unit,
}

#[derive(Debug, Clone)]
pub struct SourceDetectorPlan {
    pub sources: Vec<BoundaryData>,
    /// Outgoing-boundary data, one per detector.
    pub detectors: Vec<BoundaryData>,
    /// Sources carry the `1/omega_d` factor and may exceed 1 in max norm.
    pub delta_scaling: DeltaScaling,
}

impl SourceDetectorPlan {
    /// One delta per inflow ordinate (left end first, `mu` ascending, then
    /// the right end) and the two endpoint detectors (left, right).
    pub fn velocity_deltas(quad: &AngularQuadrature, scaling: DeltaScaling) -> Self {
        let mut sources = Vec::with_capacity(quad.n_v());
        for end in [Endpoint::Left, Endpoint::Right] {
            for j in 0..quad.half() {
                let v = match scaling {
                    DeltaScaling::InverseWeight => 1.0 / quad.omega()[j],
                    DeltaScaling::Unit => 1.0,
                };
                sources.push(BoundaryData::delta(quad, end, j, v));
            }
        }
        let detectors = vec![
            BoundaryData::endpoint(quad, Endpoint::Left),
            BoundaryData::endpoint(quad, Endpoint::Right),
        ];
        Self { sources, detectors, delta_scaling: scaling }
    }

    pub fn new(sources: Vec<BoundaryData>, detectors: Vec<BoundaryData>, delta_scaling: DeltaScaling) -> Result<Self> {
        if sources.is_empty() || detectors.is_empty() {
            return Err(Error::Config("plan needs at least one source and one detector".into()));
        }
        Ok(Self { sources, detectors, delta_scaling })
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn n_detectors(&self) -> usize {
        self.detectors.len()
    }

    pub fn n_rows(&self) -> usize {
        self.sources.len() * self.detectors.len()
    }

    pub fn row_index(&self, k: usize, d: usize) -> usize {
        k * self.sources.len() + d
    }

    pub fn pair(&self, p: usize) -> (usize, usize) {
        (p / self.sources.len(), p % self.sources.len())
    }

    /// Largest source value once the delta scaling is divided out.
    pub fn normalized_max(&self, quad: &AngularQuadrature) -> f64 {
        self.sources
            .iter()
            .map(|s| match self.delta_scaling {
                DeltaScaling::Unit => s.max_abs(),
                DeltaScaling::InverseWeight => s
                    .left
                    .iter()
                    .chain(&s.right)
                    .zip(quad.omega().iter().chain(quad.omega()))
                    .fold(0.0f64, |a, (v, w)| a.max((v * w).abs())),
            })
            .fold(0.0, f64::max)
    }

    fn check(&self, quad: &AngularQuadrature) -> Result<()> {
        let m = quad.half();
        for b in self.sources.iter().chain(&self.detectors) {
            if b.left.len() != m || b.right.len() != m {
                return Err(Error::Mismatch(format!("plan data must have {m} values per end")));
            }
        }
        Ok(())
    }
}

/// `sum omega_j mu_j psi_j f_out` for outgoing-boundary data `psi`.
pub fn detector_response(psi: &BoundaryData, f: &TransportSolution) -> f64 {
    let out = f.outflow_trace();
    let m = f.n_v() / 2;
    (0..m)
        .map(|j| {
            let k = m + j;
            f.weights()[k] * f.ordinates()[k] * (psi.left[j] * out.left[j] + psi.right[j] * out.right[j])
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelOptions {
    pub include_weights: bool,
    pub adjoint_mode: AdjointMode,
    pub solver: SolverOptions,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self { include_weights: true, adjoint_mode: AdjointMode::Algebraic, solver: SolverOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub entries: DMatrix<f64>,
    pub kind: ProblemKind,
    pub kn: f64,
    pub weights_included: bool,
    pub adjoint_mode: AdjointMode,
    pub n_sources: usize,
    pub n_detectors: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl KernelMatrix {
    pub fn n_rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn row(&self, p: usize) -> Vec<f64> {
        self.entries.row(p).iter().cloned().collect()
    }

    pub fn pair(&self, p: usize) -> (usize, usize) {
        (p / self.n_sources, p % self.n_sources)
    }

    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        (&self.entries * DVector::from_column_slice(s)).data.as_vec().clone()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.amax()
    }

    /// The submatrix on the given columns.
    pub fn columns(&self, keep: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_rows(), keep.len(), |p, c| self.entries[(p, keep[c])])
    }

    /// Grid rows `i`, `x_i`, `w_i` keyed in the first column, then one row
    /// `k,d,A_p1,..` per (detector, source), both 1-based.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let n = self.n_cols();
        let head: Vec<String> = ["i".to_string(), String::new()]
            .into_iter()
            .chain((1..=n).map(|i| i.to_string()))
            .collect();
        let head_refs: Vec<&str> = head.iter().map(String::as_str).collect();
        let mut rows = Vec::with_capacity(self.n_rows() + 2);
        for (key, vals) in [("x_i", &self.nodes), ("w_i", &self.weights)] {
            rows.push(std::iter::once(key.to_string()).chain(std::iter::once(String::new())).chain(vals.iter().map(|v| fmt_num(*v))).collect());
        }
        for p in 0..self.n_rows() {
            let (k, d) = self.pair(p);
            rows.push(
                [(k + 1).to_string(), (d + 1).to_string()]
                    .into_iter()
                    .chain(self.entries.row(p).iter().map(|v| fmt_num(*v)))
                    .collect(),
            );
        }
        write_rows(path, &head_refs, rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataVector {
    pub values: Vec<f64>,
    pub n_sources: usize,
}

impl DataVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = self.values.iter().enumerate().map(|(p, b)| {
            let (k, d) = (p / self.n_sources, p % self.n_sources);
            vec![(k + 1).to_string(), (d + 1).to_string(), fmt_num(*b)]
        });
        write_rows(path, &["k", "d", "b"], rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataMode {
    Nonlinear,
    Linearized,
}

/// Per-cell tables for exact cell integrals of `<f0 g>` or
/// `<f0><g> - <f0 g>` when both are homogeneous cell solutions.
///
/// In modal coordinates a cell solution is `z_k(s) = zl_k pl_k(s) + zr_k pr_k(s)`;
/// the integrand is a bilinear form in the end values of the two solutions.
struct CellTables {
    c_ll: DMatrix<f64>,
    c_lr: DMatrix<f64>,
    c_rr: DMatrix<f64>,
    j_ll: Vec<f64>,
    j_lr: Vec<f64>,
    j_rr: Vec<f64>,
    /// coefficient of the slope term
    j_coef: f64,
}

const SEGMENT_POINTS: usize = 8;

/// Breakpoints halving toward both ends, so `exp(-nu s)` is resolved down
/// to `nu s ~ 1/2` in the first segment.
fn graded_rule(h: f64, nu_max: f64, base: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let levels = ((2.0 * nu_max * h).log2().ceil().max(1.0)) as i32;
    let mut left = vec![0.0];
    for l in (1..=levels).rev() {
        left.push(h / 2f64.powi(l));
    }
    let mut bps = left.clone();
    for b in left.iter().rev().skip(1) {
        bps.push(h - b);
    }
    let mut pts = Vec::with_capacity((bps.len() - 1) * base.len());
    for w in bps.windows(2) {
        // keep the decay across one panel near exp(-2); past ~40 panels the
        // fast modes are below roundoff anyway
        let pieces = ((nu_max * (w[1] - w[0]) / 2.0).ceil() as usize).clamp(1, 20);
        let step = (w[1] - w[0]) / pieces as f64;
        for i in 0..pieces {
            let (a, b) = (w[0] + i as f64 * step, w[0] + (i + 1) as f64 * step);
            for (x, wt) in base {
                pts.push((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * wt));
            }
        }
    }
    pts
}

impl CellTables {
    fn new(cell: &Cell, half: &HalfRange, scattering: bool, base: &[(f64, f64)]) -> Self {
        let m = half.m();
        let nu: Vec<f64> = cell.lambda.iter().map(|l| l.max(0.0).sqrt()).collect();
        let pts = graded_rule(cell.h, cell.nu_max(), base);
        let nq = pts.len();
        let mut pl = DMatrix::zeros(m, nq);
        let mut pr = DMatrix::zeros(m, nq);
        let (mut j_ll, mut j_lr, mut j_rr) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for (q, (s, w)) in pts.iter().enumerate() {
            let sw = w.sqrt();
            for k in 0..m {
                let b = mode_basis(nu[k], cell.h, *s);
                pl[(k, q)] = sw * b[0];
                pr[(k, q)] = sw * b[1];
                j_ll[k] += w * b[2] * b[2];
                j_lr[k] += w * b[2] * b[3];
                j_rr[k] += w * b[3] * b[3];
            }
        }
        let i_ll = &pl * pl.transpose();
        let i_lr = &pl * pr.transpose();
        let i_rr = &pr * pr.transpose();
        let dinv = DMatrix::from_fn(m, m, |j, k| if j == k { 1.0 / (half.mu[j] * half.mu[j]) } else { 0.0 });
        let p = cell.q.transpose() * dinv * &cell.q;
        let weight = if scattering {
            let rq = cell.q.tr_mul(&DVector::from_column_slice(&half.r));
            &rq * rq.transpose() - p
        } else {
            p
        };
        let st2 = cell.sigma_t * cell.sigma_t;
        Self {
            c_ll: weight.component_mul(&i_ll),
            c_lr: weight.component_mul(&i_lr),
            c_rr: weight.component_mul(&i_rr),
            j_ll,
            j_lr,
            j_rr,
            j_coef: if scattering { 1.0 / st2 } else { -1.0 / st2 },
        }
    }

    fn integral(&self, zl0: &DVector<f64>, zr0: &DVector<f64>, zlg: &DVector<f64>, zrg: &DVector<f64>) -> f64 {
        let a = zl0.dot(&(&self.c_ll * zlg + &self.c_lr * zrg)) + zr0.dot(&(self.c_lr.tr_mul(zlg) + &self.c_rr * zrg));
        let j: f64 = (0..zl0.len())
            .map(|k| {
                zl0[k] * (self.j_ll[k] * zlg[k] + self.j_lr[k] * zrg[k])
                    + zr0[k] * (self.j_lr[k] * zlg[k] + self.j_rr[k] * zrg[k])
            })
            .sum();
        a + self.j_coef * j
    }
}

/// Row computation shared by assembly, single-row checks and the CLI.
pub struct KernelBuilder {
    solver: TransportSolver,
    kind: ProblemKind,
    options: KernelOptions,
    tables: Option<Vec<CellTables>>,
}

impl KernelBuilder {
    pub fn new(problem: &TransportProblem, kind: ProblemKind, options: KernelOptions) -> Result<Self> {
        let background = kind.background(problem)?;
        let solver = TransportSolver::new(&background, options.solver)?;
        let tables = match options.adjoint_mode {
            AdjointMode::Continuous => None,
            AdjointMode::Algebraic => {
                let rule = GaussLegendre::new(NonZeroUsize::new(SEGMENT_POINTS).expect("nonzero"));
                let base: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
                let op = solver.operator();
                let scattering = !kind.perturbs_absorption();
                Some(op.cells.par_iter().map(|c| CellTables::new(c, &op.half, scattering, &base)).collect())
            }
        };
        Ok(Self { solver, kind, options, tables })
    }

    pub fn solver(&self) -> &TransportSolver {
        &self.solver
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn forward(&self, source: &BoundaryData) -> Result<TransportSolution> {
        self.solver.forward(source)
    }

    pub fn adjoint(&self, detector: &BoundaryData) -> Result<TransportSolution> {
        self.solver.adjoint(detector, self.options.adjoint_mode)
    }

    /// Row of `A` for one (f0, g) pair.
    pub fn row(&self, f0: &TransportSolution, g: &TransportSolution) -> Result<Vec<f64>> {
        f0.check_same_grid(g)?;
        let problem = self.solver.problem();
        let kn = problem.kn;
        let w = problem.grid.weights();
        let n = problem.grid.n_x();
        let row = match &self.tables {
            None => {
                let gamma = if self.kind.perturbs_absorption() {
                    gamma_absorption(f0, g, kn)?.scaled(-1.0)
                } else {
                    gamma_scattering(f0, g, kn)?
                };
                let mut r = gamma.into_values();
                if self.options.include_weights {
                    r.iter_mut().zip(w).for_each(|(a, wi)| *a *= wi);
                }
                r
            }
            Some(tables) => {
                let op = self.solver.operator();
                let m = op.block_size();
                let (u0, ug) = (f0.even_part(), g.even_part());
                let scale = if self.kind.perturbs_absorption() { -kn } else { 1.0 / kn };
                let mut r = vec![0.0; n];
                for (c, (cell, t)) in op.cells.iter().zip(tables).enumerate() {
                    let at = |u: &[f64], i: usize| cell.modal(&u[i * m..(i + 1) * m], &op.half);
                    let v = scale * t.integral(&at(u0, c), &at(u0, c + 1), &at(ug, c), &at(ug, c + 1));
                    r[c] += 0.5 * v;
                    r[c + 1] += 0.5 * v;
                }
                if !self.options.include_weights {
                    r.iter_mut().zip(w).for_each(|(a, wi)| *a /= wi);
                }
                r
            }
        };
        Ok(row)
    }

    pub fn assemble(&self, plan: &SourceDetectorPlan) -> Result<KernelMatrix> {
        let problem = self.solver.problem();
        plan.check(&problem.quad)?;
        let fwd: Vec<TransportSolution> = plan
            .sources
            .par_iter()
            .enumerate()
            .map(|(d, s)| self.forward(s).map_err(|e| at_pair(e, None, Some(d))))
            .collect::<Result<_>>()?;
        let adj: Vec<TransportSolution> = plan
            .detectors
            .par_iter()
            .enumerate()
            .map(|(k, s)| self.adjoint(s).map_err(|e| at_pair(e, Some(k), None)))
            .collect::<Result<_>>()?;
        let n = problem.grid.n_x();
        let rows: Vec<Vec<f64>> = (0..plan.n_rows())
            .into_par_iter()
            .map(|p| {
                let (k, d) = plan.pair(p);
                self.row(&fwd[d], &adj[k]).map_err(|e| at_pair(e, Some(k), Some(d)))
            })
            .collect::<Result<_>>()?;
        let entries = DMatrix::from_fn(rows.len(), n, |p, i| rows[p][i]);
        Ok(KernelMatrix {
            entries,
            kind: self.kind,
            kn: problem.kn,
            weights_included: self.options.include_weights,
            adjoint_mode: self.options.adjoint_mode,
            n_sources: plan.n_sources(),
            n_detectors: plan.n_detectors(),
            nodes: problem.grid.nodes().to_vec(),
            weights: problem.grid.weights().to_vec(),
        })
    }

    /// First-order data for one source: zero inflow, source `-dK u0`.
    pub fn linearized_response(&self, f0: &TransportSolution, perturbation: &[f64]) -> Result<TransportSolution> {
        let zero = vec![0.0; perturbation.len()];
        let (ds, da) = self.kind.split(perturbation, &zero);
        self.solver.linearized(f0, ds, da)
    }
}

fn at_pair(e: Error, k: Option<usize>, d: Option<usize>) -> Error {
    let label = match (k, d) {
        (Some(k), Some(d)) => format!("kernel row (k={}, d={})", k + 1, d + 1),
        (Some(k), None) => format!("adjoint solve for detector k={}", k + 1),
        (_, Some(d)) => format!("forward solve for source d={}", d + 1),
        _ => "kernel".into(),
    };
    match e {
        Error::SolverFailure { stage, residual } => Error::SolverFailure { stage: format!("{label}: {stage}"), residual },
        other => Error::SolverFailure { stage: format!("{label}: {other}"), residual: f64::NAN },
    }
}

pub fn assemble_kernel_matrix(
    problem: &TransportProblem,
    plan: &SourceDetectorPlan,
    kind: ProblemKind,
    options: KernelOptions,
) -> Result<KernelMatrix> {
    KernelBuilder::new(problem, kind, options)?.assemble(plan)
}

pub fn synthesize_data(
    background: &TransportProblem,
    perturbation: &CoefficientField,
    plan: &SourceDetectorPlan,
    kind: ProblemKind,
    mode: DataMode,
    solver: SolverOptions,
) -> Result<DataVector> {
    let base = kind.background(background)?;
    if perturbation.len() != base.grid.n_x() {
        return Err(Error::Mismatch("perturbation length differs from grid".into()));
    }
    plan.check(&base.quad)?;
    let builder = KernelBuilder::new(&base, kind, KernelOptions { solver, adjoint_mode: AdjointMode::Continuous, ..Default::default() })?;
    let per_source: Vec<Vec<f64>> = match mode {
        DataMode::Linearized => plan
            .sources
            .par_iter()
            .map(|s| {
                let f0 = builder.forward(s)?;
                let df = builder.linearized_response(&f0, perturbation.values())?;
                Ok(plan.detectors.iter().map(|psi| detector_response(psi, &df)).collect())
            })
            .collect::<Result<_>>()?,
        DataMode::Nonlinear => {
            let (s, a) = if kind.perturbs_absorption() {
                (base.sigma_s.clone(), base.sigma_a.plus(perturbation))
            } else {
                (base.sigma_s.plus(perturbation), base.sigma_a.clone())
            };
            let pert = TransportSolver::new(&base.with_coefficients(s, a)?, solver)?;
            plan.sources
                .par_iter()
                .map(|src| {
                    let f0 = builder.forward(src)?;
                    let f1 = pert.forward(src)?;
                    Ok(plan.detectors.iter().map(|psi| detector_response(psi, &f1) - detector_response(psi, &f0)).collect())
                })
                .collect::<Result<_>>()?
        }
    };
    let mut values = vec![0.0; plan.n_rows()];
    for (d, col) in per_source.iter().enumerate() {
        for (k, b) in col.iter().enumerate() {
            values[plan.row_index(k, d)] = *b;
        }
    }
    Ok(DataVector { values, n_sources: plan.n_sources() })
}

/// `|<A_p, s> - b_p| / max(|b_p|, 1e-14 |A_p|_max)` for one (k, d) pair,
/// with `b_p` from the linearized solve.
pub fn duality_residual(
    problem: &TransportProblem,
    plan: &SourceDetectorPlan,
    k: usize,
    d: usize,
    perturbation: &CoefficientField,
    kind: ProblemKind,
    adjoint_mode: AdjointMode,
) -> Result<f64> {
    let builder = KernelBuilder::new(problem, kind, KernelOptions { adjoint_mode, ..Default::default() })?;
    let (src, det) = match (plan.sources.get(d), plan.detectors.get(k)) {
        (Some(s), Some(t)) => (s, t),
        _ => return Err(Error::Mismatch(format!("no plan entry (k={k}, d={d})"))),
    };
    let f0 = builder.forward(src)?;
    let g = builder.adjoint(det)?;
    let row = builder.row(&f0, &g)?;
    let b = detector_response(det, &builder.linearized_response(&f0, perturbation.values())?);
    let pred: f64 = row.iter().zip(perturbation.values()).map(|(a, s)| a * s).sum();
    let amax = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let floor = (1e-14 * amax).max(f64::MIN_POSITIVE);
    Ok((pred - b).abs() / b.abs().max(floor))
}
