//! Command-line front end. `run` returns the process exit code so tests can
//! drive it without spawning a process.

use crate::conditioning::{
    condition_growth, estimate_distinguishability, median, svd_report, SvdReport, RANK_TOL,
};
use crate::diffusion::{greens_functions, solve_diffusion, write_field_csv, Closure, DiffusionProblem};
use crate::error::{Error, Result};
use crate::experiment::{
    add_noise, density_row, diffusion_error, halfspace_result, kernel_flatness, median_ratio_profile,
    ratio_study, ExperimentConfig,
};
use crate::kernel::{synthesize_data, DataMode, DeltaScaling, ProblemKind};
use crate::output::{fmt_num, write_json, write_rows};
use crate::transport::{AdjointMode, BoundaryData, Endpoint, SolverKind, TransportSolver};
use crate::{Expression, InteriorMask};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

pub const THREADS_ENV: &str = "RTE_INVERSE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "rte-inverse", version, about = "Slab transport inverse-problem experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Absorption,
    ScatteringCritical,
    ScatteringSubcritical,
}

impl From<KindArg> for ProblemKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Absorption => ProblemKind::Absorption,
            KindArg::ScatteringCritical => ProblemKind::ScatteringCritical,
            KindArg::ScatteringSubcritical => ProblemKind::ScatteringSubcritical,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Continuous,
    Algebraic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScalingArg {
    InverseWeight,
    Unit,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Direct,
    Gmres,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClosureArg {
    Specular,
    AverageMatching,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DataArg {
    Nonlinear,
    Linearized,
}

/// Options shared by every subcommand; flags override the config file.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config, or a manifest.json written by `paper-figures`
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub nx: Option<usize>,
    #[arg(long, global = true)]
    pub nv: Option<usize>,
    /// comma-separated Knudsen numbers
    #[arg(long, global = true, value_delimiter = ',')]
    pub kn: Option<Vec<f64>>,
    #[arg(long, global = true, value_enum)]
    pub kind: Option<KindArg>,
    /// preset name or expression in x
    #[arg(long = "sigma-s", global = true, allow_hyphen_values = true)]
    pub sigma_s: Option<String>,
    #[arg(long = "sigma-a", global = true, allow_hyphen_values = true)]
    pub sigma_a: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub delta_scaling: Option<ScalingArg>,
    #[arg(long, global = true, value_enum)]
    pub adjoint_mode: Option<ModeArg>,
    #[arg(long, global = true, value_enum)]
    pub solver: Option<SolverArg>,
    /// omit the quadrature weights from kernel rows
    #[arg(long, global = true)]
    pub no_weights: bool,
    #[arg(long, global = true)]
    pub layer_width_factor: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub perturbation: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub data_mode: Option<DataArg>,
    #[arg(long, global = true)]
    pub noise: Option<f64>,
    #[arg(long = "z", global = true)]
    pub halfspace_z: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub closure: Option<ClosureArg>,
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// assert the documented invariants; exit 4 on violation
    #[arg(long, global = true)]
    pub check: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward solve at the first Kn of the list; writes forward.csv
    Forward {
        /// const:C, left:C, right:C, delta:left:J or delta:right:J (J 1-based)
        #[arg(long, default_value = "const:1")]
        inflow: String,
        /// also write the solution to stdout
        #[arg(long)]
        print: bool,
    },
    /// Adjoint solve for an endpoint detector at the first Kn; writes adjoint.csv
    Adjoint {
        #[arg(long, value_enum, default_value = "right")]
        detector: DetectorArg,
        #[arg(long)]
        print: bool,
    },
    /// Kernel matrix per Kn; writes kernel_kn<Kn>.csv
    Kernel,
    /// Singular values and vectors per Kn, plus condition growth
    Svd {
        /// use only columns outside the layers shared by the sweep
        #[arg(long)]
        interior: bool,
    },
    /// Worst relative variation of the critical kernel rows
    Flatness,
    /// Ratio identity of the subcritical scattering kernel
    Ratio,
    /// Diffusion solution, Green's pair and interior error per Kn
    Diffusion,
    /// Half-space far-field value; writes halfspace.json
    Halfspace {
        /// inflow profile as an expression in the ordinate, written `x`
        #[arg(long, default_value = "x")]
        phi: String,
    },
    /// Tikhonov recovery of the perturbation from noisy data
    Reconstruct,
    /// Kernel, spectrum and data for every Kn, concurrently
    Sweep,
    /// fig1.csv .. fig6.csv and manifest.json
    PaperFigures,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DetectorArg {
    Left,
    Right,
}

fn build_config(c: &Common, command: &Command) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => load_config(p)?,
        None => {
            let mut d = ExperimentConfig::default();
            match command {
                Command::Flatness => {
                    d.kind = ProblemKind::ScatteringCritical;
                    d.kn_list = vec![1.0];
                }
                Command::Ratio => d.kind = ProblemKind::ScatteringSubcritical,
                Command::Diffusion => d.kn_list = vec![0.25, 0.125, 0.0625, 0.03125],
                _ => {}
            }
            d
        }
    };
    if let Some(v) = c.nx {
        cfg.n_x = v;
    }
    if let Some(v) = c.nv {
        cfg.n_v = v;
    }
    if let Some(v) = &c.kn {
        cfg.kn_list = v.clone();
    }
    if let Some(v) = c.kind {
        cfg.kind = v.into();
    }
    if let Some(v) = &c.sigma_s {
        cfg.sigma_s = v.clone();
    }
    if let Some(v) = &c.sigma_a {
        cfg.sigma_a = v.clone();
    }
    if let Some(v) = c.delta_scaling {
        cfg.delta_scaling = match v {
            ScalingArg::InverseWeight => DeltaScaling::InverseWeight,
            ScalingArg::Unit => DeltaScaling::Unit,
        };
    }
    if let Some(v) = c.adjoint_mode {
        cfg.adjoint_mode = match v {
            ModeArg::Continuous => AdjointMode::Continuous,
            ModeArg::Algebraic => AdjointMode::Algebraic,
        };
    }
    if let Some(v) = c.solver {
        cfg.solver = match v {
            SolverArg::Direct => SolverKind::Direct,
            SolverArg::Gmres => SolverKind::Gmres,
        };
    }
    if c.no_weights {
        cfg.include_weights = false;
    }
    if let Some(v) = c.layer_width_factor {
        cfg.layer_width_factor = v;
    }
    if let Some(v) = &c.perturbation {
        cfg.perturbation = v.clone();
    }
    if let Some(v) = c.data_mode {
        cfg.data_mode = match v {
            DataArg::Nonlinear => DataMode::Nonlinear,
            DataArg::Linearized => DataMode::Linearized,
        };
    }
    if let Some(v) = c.noise {
        cfg.noise = v;
    }
    if let Some(v) = c.halfspace_z {
        cfg.halfspace_z = v;
    }
    if let Some(v) = c.closure {
        cfg.closure = match v {
            ClosureArg::Specular => Closure::Specular,
            ClosureArg::AverageMatching => Closure::AverageMatching,
        };
    }
    if let Some(v) = &c.out {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// A config file, or the `config` record of a manifest.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let inner = v.get("config").cloned().unwrap_or(v);
        let cfg: ExperimentConfig = serde_json::from_value(inner)?;
        cfg.validate()?;
        return Ok(cfg);
    }
    ExperimentConfig::from_file(path)
}

/// Set the global pool from `RTE_INVERSE_THREADS` once.
pub fn init_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_threads();
    let cfg = match build_config(&cli.common, &cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match dispatch(&cli.command, &cfg, cli.common.check) {
        Ok(failures) if failures.is_empty() => EXIT_OK,
        Ok(failures) => {
            for f in failures {
                eprintln!("check failed: {f}");
            }
            EXIT_CHECK
        }
        Err(e @ Error::SolverFailure { .. }) => {
            eprintln!("error: {e}");
            EXIT_SOLVER
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_SOLVER,
                _ => EXIT_USAGE,
            }
        }
    }
}

/// Parse an inflow spec into boundary data.
pub fn parse_inflow(spec: &str, cfg: &ExperimentConfig) -> Result<BoundaryData> {
    let quad = cfg.quad()?;
    let bad = || Error::Config(format!("bad inflow '{spec}'"));
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
    Ok(match parts.as_slice() {
        ["const", c] => BoundaryData::constant(&quad, num(c)?),
        ["left", c] => BoundaryData::endpoint(&quad, Endpoint::Left).scaled(num(c)?),
        ["right", c] => BoundaryData::endpoint(&quad, Endpoint::Right).scaled(num(c)?),
        ["delta", end, j] => {
            let j: usize = j.parse().map_err(|_| bad())?;
            if j == 0 || j > quad.half() {
                return Err(Error::Config(format!("ordinate index {j} out of 1..={}", quad.half())));
            }
            let v = match cfg.delta_scaling {
                DeltaScaling::InverseWeight => 1.0 / quad.omega()[j - 1],
                DeltaScaling::Unit => 1.0,
            };
            let end = match *end {
                "left" => Endpoint::Left,
                "right" => Endpoint::Right,
                _ => return Err(bad()),
            };
            BoundaryData::delta(&quad, end, j - 1, v)
        }
        _ => return Err(bad()),
    })
}

fn kn_tag(kn: f64) -> String {
    format!("{kn}")
}

fn dispatch(cmd: &Command, cfg: &ExperimentConfig, check: bool) -> Result<Vec<String>> {
    let out = &cfg.output_dir;
    let mut fails = Vec::new();
    match cmd {
        Command::Forward { inflow, print } => {
            let data = parse_inflow(inflow, cfg)?;
            let kn = cfg.kn_list[0];
            let problem = cfg.problem(kn)?;
            let f = TransportSolver::new(&problem, cfg.solver_options())?.forward(&data)?;
            f.write_csv(&out.join("forward.csv"))?;
            if *print {
                print_solution(&f);
            }
            println!(
                "kn={kn} min={} max={} outflow_left={} outflow_right={}",
                fmt_num(f.min()),
                fmt_num(f.max()),
                fmt_num(f.measure(Endpoint::Left)),
                fmt_num(f.measure(Endpoint::Right))
            );
            if check {
                fails.extend(solution_checks(&f, &data, problem.sigma_a.is_zero()));
            }
        }
        Command::Adjoint { detector, print } => {
            let quad = cfg.quad()?;
            let end = match detector {
                DetectorArg::Left => Endpoint::Left,
                DetectorArg::Right => Endpoint::Right,
            };
            let data = BoundaryData::endpoint(&quad, end);
            let kn = cfg.kn_list[0];
            let problem = cfg.problem(kn)?;
            let g = TransportSolver::new(&problem, cfg.solver_options())?.adjoint(&data, cfg.adjoint_mode)?;
            g.write_csv(&out.join("adjoint.csv"))?;
            if *print {
                print_solution(&g);
            }
            println!("kn={kn} min={} max={}", fmt_num(g.min()), fmt_num(g.max()));
            if check && (g.min() < -1e-10 || g.max() > 1.0 + 1e-10) {
                fails.push(format!("adjoint solution leaves [0, 1] at kn={kn}"));
            }
        }
        Command::Kernel => {
            for &kn in &cfg.kn_list {
                let a = cfg.kernel(kn)?;
                a.write_csv(&out.join(format!("kernel_kn{}.csv", kn_tag(kn))))?;
                println!("kn={kn} rows={} cols={} max_abs={}", a.n_rows(), a.n_cols(), fmt_num(a.max_abs()));
                if check && !a.entries.iter().all(|v| v.is_finite()) {
                    fails.push(format!("non-finite kernel entries at kn={kn}"));
                }
            }
        }
        Command::Svd { interior } => {
            let mask = if *interior { Some(cfg.sweep_mask()?) } else { None };
            let reps: Vec<(f64, SvdReport)> = cfg
                .kn_list
                .par_iter()
                .map(|&kn| Ok((kn, svd_report(&cfg.kernel(kn)?, mask.as_ref(), RANK_TOL))))
                .collect::<Result<_>>()?;
            for (kn, rep) in &reps {
                rep.write_values_csv(&out.join(format!("svd_kn{}.csv", kn_tag(*kn))))?;
                rep.write_vectors_csv(&out.join(format!("vectors_kn{}.csv", kn_tag(*kn))))?;
                let s = &rep.singular_values;
                let gap = (rep.s(2) / rep.s(3)).log2();
                println!("kn={kn} s1={} s3={} s4={} above_10s4={} log2(s3/s4)={gap:.4} rank={}", fmt_num(s[0]), fmt_num(rep.s(2)), fmt_num(rep.s(3)), rep.count_above(10.0 * rep.s(3)), rep.rank);
                if check && rep.count_above(10.0 * rep.s(3)) != 3 {
                    fails.push(format!("kn={kn}: expected exactly 3 singular values above 10 s4"));
                }
            }
            if reps.len() >= 2 {
                let table = condition_growth(&reps.iter().map(|(k, r)| (*k, r)).collect::<Vec<_>>(), 3)?;
                write_json(&out.join("condition.json"), &table)?;
                println!("effective condition slope={:.4}", table.effective_slope);
                if check {
                    let mut sorted = reps.iter().map(|(k, r)| (*k, r.s(2) / r.s(3))).collect::<Vec<_>>();
                    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
                    if sorted.windows(2).any(|w| w[1].1 <= w[0].1) {
                        fails.push("log2(s3/s4) does not grow as Kn decreases".into());
                    }
                    if table.effective_slope < 0.8 {
                        fails.push(format!("condition slope {} < 0.8", table.effective_slope));
                    }
                }
            }
        }
        Command::Flatness => {
            for &kn in &cfg.kn_list {
                let a = cfg.kernel(kn)?;
                let worst = kernel_flatness(&a)?.into_iter().fold(0.0, f64::max);
                println!("{}", fmt_num(worst));
                if check && worst > 1e-3 {
                    fails.push(format!("flatness {worst} > 1e-3 at kn={kn}"));
                }
            }
        }
        Command::Ratio => {
            let grid = cfg.grid()?;
            let (s, _) = cfg.coefficients(&grid)?;
            let mut rows = Vec::new();
            let mut medians = Vec::new();
            for &kn in &cfg.kn_list {
                let mask = InteriorMask::new(&grid, cfg.layer_width_factor, kn, &s)?;
                let reps = ratio_study(cfg, kn, &mask)?;
                let worst = reps.iter().map(|r| r.max_relative_error()).fold(0.0, f64::max);
                let all: Vec<f64> = reps.iter().flat_map(|r| r.ratio.iter().cloned()).collect();
                let med = median(&all);
                medians.push((kn, med));
                println!("kn={kn} max_rel_err={} median_ratio={}", fmt_num(worst), fmt_num(med));
                for (i, r, p) in median_ratio_profile(&reps) {
                    rows.push(vec![fmt_num(kn), fmt_num(grid.nodes()[i]), fmt_num(r), fmt_num(p)]);
                }
                if check && worst > 0.05 {
                    fails.push(format!("ratio error {worst} > 5% at kn={kn}"));
                }
            }
            write_rows(&out.join("ratio.csv"), &["kn", "x", "ratio", "predicted"], rows)?;
            if check {
                for w in medians.windows(2) {
                    let q = (w[0].1 / w[1].1) / (w[0].0 / w[1].0);
                    if (q - 1.0).abs() > 0.1 {
                        fails.push(format!("median ratio scales by {q} relative to Kn between {} and {}", w[0].0, w[1].0));
                    }
                }
            }
        }
        Command::Diffusion => {
            let grid = cfg.grid()?;
            let problem = cfg.problem(cfg.kn_list[0])?;
            let hs = halfspace_result(cfg, |_| 1.0)?;
            let rho = solve_diffusion(&DiffusionProblem::new(grid.clone(), problem.sigma_s.clone(), problem.sigma_a.clone(), hs.xi, hs.xi)?)?;
            let gp = greens_functions(&problem.sigma_s, &problem.sigma_a, &grid)?;
            write_field_csv(&out.join("rho.csv"), grid.nodes(), &rho)?;
            write_field_csv(&out.join("g1.csv"), grid.nodes(), &gp.g1)?;
            write_field_csv(&out.join("g2.csv"), grid.nodes(), &gp.g2)?;
            let mask = cfg.sweep_mask()?;
            let errs: Vec<(f64, f64)> = cfg
                .kn_list
                .par_iter()
                .map(|&kn| Ok((kn, diffusion_error(cfg, kn, &mask)?)))
                .collect::<Result<_>>()?;
            let mut rows = Vec::new();
            for (kn, e) in &errs {
                println!("kn={kn} interior_error={}", fmt_num(*e));
                rows.push(vec![fmt_num(*kn), fmt_num(*e)]);
            }
            write_rows(&out.join("diffusion_error.csv"), &["kn", "error"], rows)?;
            if check {
                let mut sorted = errs.clone();
                sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
                if sorted.windows(2).any(|w| w[1].1 >= w[0].1) {
                    fails.push("interior error does not decrease with Kn".into());
                }
            }
        }
        Command::Halfspace { phi } => {
            let e = Expression::parse(phi)?;
            let r = halfspace_result(cfg, |mu| e.eval(mu))?;
            write_json(&out.join("halfspace.json"), &r)?;
            println!("{}", fmt_num(r.xi));
            if let Some(w) = &r.warning {
                eprintln!("warning: {w}");
            }
            if check && r.sensitivity > 0.01 {
                fails.push(format!("half-space value moves by {} under Z doubling", r.sensitivity));
            }
        }
        Command::Reconstruct => {
            let results: Vec<_> = cfg
                .kn_list
                .par_iter()
                .map(|&kn| {
                    let problem = cfg.problem(kn)?;
                    let kernel = cfg.kernel(kn)?;
                    let truth = cfg.perturbation_field(&problem.grid)?;
                    let plan = cfg.plan(&problem.quad);
                    let b = synthesize_data(&problem, &truth, &plan, cfg.kind, cfg.data_mode, cfg.solver_options())?;
                    let noisy = add_noise(&b, cfg.noise, cfg.seed);
                    let rec = crate::conditioning::tikhonov_sweep(&kernel.entries, &noisy.values, truth.values(), problem.grid.weights(), cfg.lambda_min, cfg.lambda_max)?;
                    let bn = b.values.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let dist = estimate_distinguishability(&kernel.entries, truth.values(), cfg.noise * bn)?;
                    Ok((kn, problem, truth, noisy, rec, dist))
                })
                .collect::<Result<Vec<_>>>()?;
            for (kn, problem, truth, noisy, rec, dist) in &results {
                let tag = kn_tag(*kn);
                noisy.write_csv(&out.join(format!("data_kn{tag}.csv")))?;
                let rows = problem.grid.nodes().iter().enumerate().map(|(i, x)| vec![fmt_num(*x), fmt_num(truth.values()[i]), fmt_num(rec.best[i])]);
                write_rows(&out.join(format!("recon_kn{tag}.csv")), &["x", "truth", "recovered"], rows)?;
                write_json(&out.join(format!("recovery_kn{tag}.json")), rec)?;
                write_json(&out.join(format!("distinguishability_kn{tag}.json")), dist)?;
                println!("kn={kn} best_error={} best_lambda_rel={}", fmt_num(rec.best_error), fmt_num(rec.best_lambda));
            }
            if check {
                let mut r: Vec<(f64, f64)> = results.iter().map(|t| (t.0, t.4.best_error)).collect();
                r.sort_by(|a, b| b.0.total_cmp(&a.0));
                if let (Some(first), Some(last)) = (r.first(), r.last()) {
                    if r.len() > 1 && last.1 <= first.1 {
                        fails.push(format!("recovery error at kn={} is not above kn={}", last.0, first.0));
                    }
                }
            }
        }
        Command::Sweep => {
            let mask = cfg.sweep_mask()?;
            let done: Vec<(f64, SvdReport)> = cfg
                .kn_list
                .par_iter()
                .map(|&kn| {
                    let tag = kn_tag(kn);
                    let a = cfg.kernel(kn)?;
                    a.write_csv(&out.join(format!("kernel_kn{tag}.csv")))?;
                    let rep = svd_report(&a, Some(&mask), RANK_TOL);
                    rep.write_values_csv(&out.join(format!("svd_kn{tag}.csv")))?;
                    rep.write_vectors_csv(&out.join(format!("vectors_kn{tag}.csv")))?;
                    let problem = cfg.problem(kn)?;
                    let truth = cfg.perturbation_field(&problem.grid)?;
                    let b = synthesize_data(&problem, &truth, &cfg.plan(&problem.quad), cfg.kind, cfg.data_mode, cfg.solver_options())?;
                    b.write_csv(&out.join(format!("data_kn{tag}.csv")))?;
                    Ok((kn, rep))
                })
                .collect::<Result<_>>()?;
            let table = if done.len() >= 2 {
                Some(condition_growth(&done.iter().map(|(k, r)| (*k, r)).collect::<Vec<_>>(), 3)?)
            } else {
                None
            };
            for (kn, rep) in &done {
                println!("kn={kn} s1={} log2(s3/s4)={:.4}", fmt_num(rep.s(0)), (rep.s(2) / rep.s(3)).log2());
            }
            write_json(&out.join("manifest.json"), &json!({ "config": cfg, "command": "sweep", "condition": table }))?;
        }
        Command::PaperFigures => fails.extend(paper_figures(cfg, check)?),
    }
    Ok(fails)
}

fn print_solution(f: &crate::TransportSolution) {
    println!("x,v,f");
    for i in 0..f.n_x() {
        for j in 0..f.n_v() {
            println!("{},{},{}", fmt_num(f.nodes()[i]), fmt_num(f.ordinates()[j]), fmt_num(f.value(i, j)));
        }
    }
}

fn solution_checks(f: &crate::TransportSolution, data: &BoundaryData, critical: bool) -> Vec<String> {
    let mut fails = Vec::new();
    let top = data.max().max(0.0);
    let tol = 1e-10 * top.max(1.0);
    if data.left.iter().chain(&data.right).all(|v| *v >= 0.0) && (f.min() < -tol || f.max() > top + tol) {
        fails.push(format!("solution leaves [0, {top}]: [{}, {}]", f.min(), f.max()));
    }
    if critical {
        let j0 = f.flux(0);
        let (mu, w) = (f.ordinates(), f.weights());
        let m = mu.len() / 2;
        // incoming partial current
        let scale: f64 = (0..m).map(|j| w[m + j] * mu[m + j] * (data.left[j] + data.right[j])).sum();
        if (0..f.n_x()).any(|i| (f.flux(i) - j0).abs() > 1e-8 * scale.abs().max(f64::MIN_POSITIVE)) {
            fails.push("net flux is not constant in the critical case".into());
        }
    }
    fails
}

fn spectrum_columns(path: &Path, reps: &[(f64, SvdReport)]) -> Result<()> {
    let n = reps.iter().map(|(_, r)| r.singular_values.len()).max().unwrap_or(0);
    let header: Vec<String> = std::iter::once("index".to_string()).chain(reps.iter().map(|(k, _)| format!("kn_{k}"))).collect();
    let href: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..n).map(|i| {
        std::iter::once((i + 1).to_string())
            .chain(reps.iter().map(|(_, r)| r.singular_values.get(i).map(|v| fmt_num(*v)).unwrap_or_default()))
            .collect()
    });
    write_rows(path, &href, rows)
}

fn vector_rows(path: &Path, reps: &[(f64, SvdReport)]) -> Result<()> {
    let mut rows = Vec::new();
    for (kn, r) in reps {
        for i in 0..r.v.nrows() {
            let mut row = vec![fmt_num(*kn), fmt_num(r.nodes[i])];
            row.extend((0..3).map(|c| if c < r.v.ncols() { fmt_num(r.v[(i, c)]) } else { String::new() }));
            rows.push(row);
        }
    }
    write_rows(path, &["kn", "x", "v1", "v2", "v3"], rows)
}

/// The full study: spectra and vectors of the interior absorption and
/// subcritical scattering kernels, the critical kernel at Kn = 1, and the
/// ratio profiles.
pub fn paper_figures(cfg: &ExperimentConfig, check: bool) -> Result<Vec<String>> {
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let mut fails = Vec::new();
    let mut summary = serde_json::Map::new();
    let spectra = |kind: ProblemKind| -> Result<(Vec<(f64, SvdReport)>, ExperimentConfig)> {
        let mut c = cfg.clone();
        c.kind = kind;
        c.sigma_s.clear();
        c.sigma_a.clear();
        let mask = c.sweep_mask()?;
        let reps = c
            .kn_list
            .par_iter()
            .map(|&kn| Ok((kn, svd_report(&c.kernel(kn)?, Some(&mask), RANK_TOL))))
            .collect::<Result<Vec<_>>>()?;
        Ok((reps, c))
    };
    for (kind, vals, vecs) in [(ProblemKind::Absorption, "fig1.csv", "fig2.csv"), (ProblemKind::ScatteringSubcritical, "fig5.csv", "fig6.csv")] {
        let (reps, _) = spectra(kind)?;
        spectrum_columns(&out.join(vals), &reps)?;
        vector_rows(&out.join(vecs), &reps)?;
        let gaps: Vec<f64> = reps.iter().map(|(_, r)| (r.s(2) / r.s(3)).log2()).collect();
        let table = condition_growth(&reps.iter().map(|(k, r)| (*k, r)).collect::<Vec<_>>(), 3).ok();
        summary.insert(kind.name().into(), json!({ "log2_s3_over_s4": gaps, "condition": table }));
        if check {
            for (kn, r) in &reps {
                if r.count_above(10.0 * r.s(3)) != 3 {
                    fails.push(format!("{}: kn={kn} does not have exactly 3 dominant singular values", kind.name()));
                }
            }
        }
    }
    // critical kernel at Kn = 1
    let mut c = cfg.clone();
    c.kind = ProblemKind::ScatteringCritical;
    c.sigma_s.clear();
    c.sigma_a.clear();
    let a = c.kernel(1.0)?;
    let mut rows = Vec::new();
    for p in 0..a.n_rows() {
        let (k, d) = a.pair(p);
        for (i, v) in density_row(&a, p).iter().enumerate() {
            rows.push(vec![(p + 1).to_string(), (k + 1).to_string(), (d + 1).to_string(), fmt_num(a.nodes[i]), fmt_num(*v)]);
        }
    }
    write_rows(&out.join("fig3.csv"), &["p", "k", "d", "x", "value"], rows)?;
    let flat = kernel_flatness(&a)?.into_iter().fold(0.0, f64::max);
    summary.insert("critical_flatness".into(), json!(flat));
    if check && flat > 1e-3 {
        fails.push(format!("critical flatness {flat} > 1e-3"));
    }
    // ratio profiles
    let mut c = cfg.clone();
    c.kind = ProblemKind::ScatteringSubcritical;
    c.sigma_s.clear();
    c.sigma_a.clear();
    let grid = c.grid()?;
    let (s, _) = c.coefficients(&grid)?;
    let mut rows = Vec::new();
    let mut worst = Vec::new();
    for &kn in &c.kn_list {
        let mask = InteriorMask::new(&grid, c.layer_width_factor, kn, &s)?;
        let reps = ratio_study(&c, kn, &mask)?;
        worst.push(reps.iter().map(|r| r.max_relative_error()).fold(0.0, f64::max));
        for (i, r, p) in median_ratio_profile(&reps) {
            rows.push(vec![fmt_num(kn), fmt_num(grid.nodes()[i]), fmt_num(r), fmt_num(p)]);
        }
    }
    write_rows(&out.join("fig4.csv"), &["kn", "x", "ratio", "predicted"], rows)?;
    summary.insert("ratio_max_rel_err".into(), json!(worst));
    let artifacts: Vec<String> = (1..=6).map(|i| format!("fig{i}.csv")).collect();
    write_json(
        &out.join("manifest.json"),
        &json!({
            "command": "paper-figures",
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg,
            "artifacts": artifacts,
            "summary": summary,
        }),
    )?;
    for a in &artifacts {
        println!("{}", out.join(a).display());
    }
    Ok(fails)
}
