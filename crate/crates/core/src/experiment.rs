//! Experiment configuration and the studies behind the CLI subcommands.

use crate::coeff::{CoefficientField, Expression, Preset};
use crate::conditioning::{
    flatness_check, median, ratio_check, svd_report, tikhonov_sweep, RatioReport, RecoveryReport,
    SvdReport, RANK_TOL,
};
use crate::diffusion::{
    halfspace_limit, interior_error, solve_diffusion, Closure, DiffusionProblem, HalfSpaceProblem,
    InteriorMask,
};
use crate::error::{Error, Result};
use crate::kernel::{
    gamma_scattering, synthesize_data, DataMode, DataVector, DeltaScaling, KernelBuilder, KernelMatrix,
    KernelOptions, ProblemKind, SourceDetectorPlan,
};
use crate::mesh::{AngularQuadrature, SpatialGrid};
use crate::transport::{AdjointMode, BoundaryData, SolverKind, SolverOptions, TransportProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_x: usize,
    pub n_v: usize,
    pub kn_list: Vec<f64>,
    pub kind: ProblemKind,
    /// preset name or an expression in `x`; empty means the kind's preset
    pub sigma_s: String,
    pub sigma_a: String,
    pub delta_scaling: DeltaScaling,
    pub adjoint_mode: AdjointMode,
    pub include_weights: bool,
    pub solver: SolverKind,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    pub layer_width_factor: f64,
    /// perturbation used by duality, synthesis and reconstruction
    pub perturbation: String,
    pub data_mode: DataMode,
    /// relative noise level on b
    pub noise: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub halfspace_z: f64,
    pub closure: Closure,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_x: 200,
            n_v: 80,
            kn_list: vec![0.25, 0.125, 0.0625],
            kind: ProblemKind::Absorption,
            sigma_s: String::new(),
            sigma_a: String::new(),
            delta_scaling: DeltaScaling::InverseWeight,
            adjoint_mode: AdjointMode::Algebraic,
            include_weights: true,
            solver: SolverKind::Direct,
            gmres_tol: 1e-10,
            gmres_restart: 50,
            gmres_max_iter: 5000,
            layer_width_factor: 5.0,
            perturbation: "0.1*sin(pi*x)".into(),
            data_mode: DataMode::Nonlinear,
            noise: 1e-6,
            lambda_min: 1e-12,
            lambda_max: 1e-2,
            halfspace_z: 50.0,
            closure: Closure::Specular,
            output_dir: PathBuf::from("out"),
            seed: 20240611,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            let cfg: Self = serde_json::from_str(&text)?;
            cfg.validate()?;
            return Ok(cfg);
        }
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.kn_list.is_empty() {
            return Err(Error::Config("kn_list is empty".into()));
        }
        if let Some(k) = self.kn_list.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(Error::Config(format!("Kn must be positive, got {k}")));
        }
        if self.n_x < 3 {
            return Err(Error::InvalidGrid(format!("n_x = {} < 3", self.n_x)));
        }
        if self.n_v < 2 || self.n_v % 2 == 1 {
            return Err(Error::InvalidQuadrature(format!("n_v = {} must be even and >= 2", self.n_v)));
        }
        for s in [&self.sigma_s, &self.sigma_a, &self.perturbation] {
            coefficient_source(s)?;
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { kind: self.solver, tol: self.gmres_tol, restart: self.gmres_restart, max_iter: self.gmres_max_iter }
    }

    pub fn kernel_options(&self) -> KernelOptions {
        KernelOptions { include_weights: self.include_weights, adjoint_mode: self.adjoint_mode, solver: self.solver_options() }
    }

    pub fn grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::uniform(self.n_x)
    }

    pub fn quad(&self) -> Result<AngularQuadrature> {
        AngularQuadrature::gauss_legendre(self.n_v)
    }

    pub fn coefficients(&self, grid: &SpatialGrid) -> Result<(CoefficientField, CoefficientField)> {
        let preset = self.kind.default_preset();
        let pick = |spec: &str, scattering: bool| -> Result<CoefficientField> {
            Ok(match coefficient_source(spec)? {
                CoefficientSource::Default => CoefficientField::from_fn(grid, |x| if scattering { preset.sigma_s(x) } else { preset.sigma_a(x) }),
                CoefficientSource::Preset(p) => CoefficientField::from_fn(grid, |x| if scattering { p.sigma_s(x) } else { p.sigma_a(x) }),
                CoefficientSource::Expr(e) => e.sample(grid),
            })
        };
        Ok((pick(&self.sigma_s, true)?, pick(&self.sigma_a, false)?))
    }

    pub fn problem(&self, kn: f64) -> Result<TransportProblem> {
        let grid = self.grid()?;
        let (s, a) = self.coefficients(&grid)?;
        let p = TransportProblem::new(grid, self.quad()?, s, a, kn)?;
        self.kind.background(&p)
    }

    pub fn perturbation_field(&self, grid: &SpatialGrid) -> Result<CoefficientField> {
        match coefficient_source(&self.perturbation)? {
            CoefficientSource::Expr(e) => Ok(e.sample(grid)),
            _ => Err(Error::Config("perturbation must be an expression in x".into())),
        }
    }

    pub fn plan(&self, quad: &AngularQuadrature) -> SourceDetectorPlan {
        SourceDetectorPlan::velocity_deltas(quad, self.delta_scaling)
    }

    pub fn builder(&self, kn: f64) -> Result<KernelBuilder> {
        KernelBuilder::new(&self.problem(kn)?, self.kind, self.kernel_options())
    }

    pub fn kernel(&self, kn: f64) -> Result<KernelMatrix> {
        let b = self.builder(kn)?;
        b.assemble(&self.plan(&b.solver().problem().quad))
    }

    /// Mask shared by every Kn of the sweep.
    pub fn sweep_mask(&self) -> Result<InteriorMask> {
        let grid = self.grid()?;
        let (s, _) = self.coefficients(&grid)?;
        InteriorMask::for_sweep(&grid, self.layer_width_factor, &self.kn_list, &s)
    }
}

pub enum CoefficientSource {
    Default,
    Preset(Preset),
    Expr(Expression),
}

pub fn coefficient_source(spec: &str) -> Result<CoefficientSource> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(CoefficientSource::Default);
    }
    if let Ok(p) = Preset::from_name(spec) {
        return Ok(CoefficientSource::Preset(p));
    }
    if spec.chars().all(|c| c.is_ascii_lowercase() || c == '-') && spec.contains('-') {
        return Err(Error::Config(format!("unknown preset '{spec}'")));
    }
    Ok(CoefficientSource::Expr(Expression::parse(spec)?))
}

/// Kernel density `A_p,i / w_i` (the row without the quadrature weights).
pub fn density_row(a: &KernelMatrix, p: usize) -> Vec<f64> {
    let r = a.row(p);
    if a.weights_included {
        r.iter().zip(&a.weights).map(|(v, w)| v / w).collect()
    } else {
        r
    }
}

/// Relative variation of every row's density.
pub fn kernel_flatness(a: &KernelMatrix) -> Result<Vec<f64>> {
    (0..a.n_rows()).map(|p| flatness_check(&density_row(a, p))).collect()
}

/// Ratio identity for the pointwise scattering kernel of every (k, d).
pub fn ratio_study(cfg: &ExperimentConfig, kn: f64, mask: &InteriorMask) -> Result<Vec<RatioReport>> {
    use rayon::prelude::*;
    let b = cfg.builder(kn)?;
    let problem = b.solver().problem().clone();
    let plan = cfg.plan(&problem.quad);
    let fwd: Vec<_> = plan.sources.par_iter().map(|s| b.forward(s)).collect::<Result<_>>()?;
    let adj: Vec<_> = plan.detectors.par_iter().map(|s| b.adjoint(s)).collect::<Result<_>>()?;
    (0..plan.n_rows())
        .into_par_iter()
        .map(|p| {
            let (k, d) = plan.pair(p);
            let gamma = gamma_scattering(&fwd[d], &adj[k], kn)?;
            ratio_check(
                problem.grid.nodes(),
                gamma.values(),
                fwd[d].average().values(),
                adj[k].average().values(),
                problem.sigma_s.values(),
                problem.sigma_a.values(),
                kn,
                mask,
            )
        })
        .collect()
}

/// Median over rows of the ratio at each node, with the predicted value.
pub fn median_ratio_profile(reports: &[RatioReport]) -> Vec<(usize, f64, f64)> {
    let mut by_node: std::collections::BTreeMap<usize, (Vec<f64>, f64)> = Default::default();
    for r in reports {
        for ((i, v), p) in r.indices.iter().zip(&r.ratio).zip(&r.predicted) {
            by_node.entry(*i).or_insert_with(|| (Vec::new(), *p)).0.push(*v);
        }
    }
    by_node.into_iter().map(|(i, (v, p))| (i, median(&v), p)).collect()
}

/// Interior error between `<f>` for isotropic unit inflow and the diffusion
/// solution with the half-space boundary values.
pub fn diffusion_error(cfg: &ExperimentConfig, kn: f64, mask: &InteriorMask) -> Result<f64> {
    let problem = cfg.problem(kn)?;
    let xi = halfspace_value(cfg, |_| 1.0)?;
    let f = crate::transport::TransportSolver::new(&problem, cfg.solver_options())?
        .forward(&BoundaryData::constant(&problem.quad, 1.0))?;
    let rho = solve_diffusion(&DiffusionProblem::new(
        problem.grid.clone(),
        problem.sigma_s.clone(),
        problem.sigma_a.clone(),
        xi,
        xi,
    )?)?;
    interior_error(&f, &rho, mask)
}

/// Far-field value of the half-space problem for inflow `phi(mu)`.
pub fn halfspace_value(cfg: &ExperimentConfig, phi: impl Fn(f64) -> f64) -> Result<f64> {
    Ok(halfspace_result(cfg, phi)?.xi)
}

pub fn halfspace_result(cfg: &ExperimentConfig, phi: impl Fn(f64) -> f64) -> Result<crate::diffusion::HalfSpaceResult> {
    let quad = cfg.quad()?;
    let inflow = quad.mu().iter().map(|&m| phi(m)).collect();
    halfspace_limit(&HalfSpaceProblem::new(1.0, inflow, quad, cfg.halfspace_z, cfg.closure)?)
}

/// Noise `noise * |b| * e / |e|` with `e` uniform in the unit cube.
pub fn add_noise(b: &DataVector, noise: f64, seed: u64) -> DataVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e: Vec<f64> = (0..b.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let en = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    let bn = b.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if en > 0.0 { noise * bn / en } else { 0.0 };
    DataVector { values: b.values.iter().zip(&e).map(|(v, n)| v + scale * n).collect(), n_sources: b.n_sources }
}

/// Tikhonov recovery of the configured perturbation from noisy data.
pub fn recovery_study(cfg: &ExperimentConfig, kn: f64) -> Result<RecoveryReport> {
    let problem = cfg.problem(kn)?;
    let kernel = cfg.kernel(kn)?;
    let truth = cfg.perturbation_field(&problem.grid)?;
    let plan = cfg.plan(&problem.quad);
    let b = synthesize_data(&problem, &truth, &plan, cfg.kind, cfg.data_mode, cfg.solver_options())?;
    let b = add_noise(&b, cfg.noise, cfg.seed);
    tikhonov_sweep(&kernel.entries, &b.values, truth.values(), problem.grid.weights(), cfg.lambda_min, cfg.lambda_max)
}

/// Spectrum of the interior kernel on the sweep mask.
pub fn interior_spectrum(kernel: &KernelMatrix, mask: &InteriorMask) -> SvdReport {
    svd_report(kernel, Some(mask), RANK_TOL)
}
