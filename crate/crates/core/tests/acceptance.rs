//! Acceptance suite at full scale (n_x = 200, n_v = 80). Runs without the
//! libtest harness so every criterion prints one PASS/FAIL line.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rte_inverse::conditioning::*;
use rte_inverse::diffusion::InteriorMask;
use rte_inverse::experiment::*;
use rte_inverse::kernel::*;
use rte_inverse::transport::gmres;
use rte_inverse::*;
use std::f64::consts::PI;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sigma_s_ref(x: f64) -> f64 {
    1.0 + 1.0 / (1.5 + (2.0 * PI * x).sin())
}

fn sigma_a_ref(x: f64) -> f64 {
    4.0 + 0.5 * (4.0 * PI * x).sin()
}

fn config(kind: ProblemKind) -> ExperimentConfig {
    ExperimentConfig { kind, ..Default::default() }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let cfg = config(ProblemKind::Absorption);
    let kn = 0.25;
    let problem = cfg.problem(kn).unwrap();
    let a = cfg.kernel(kn).unwrap();
    let pert: Vec<f64> = problem.grid.nodes().iter().map(|x| 0.1 * (PI * x).sin()).collect();
    let plan = cfg.plan(&problem.quad);
    let solver = TransportSolver::new(&problem, cfg.solver_options()).unwrap();
    let zeros = vec![0.0; pert.len()];
    // b_p from the linearized forward solve, one per source
    let responses: Vec<Vec<f64>> = plan
        .sources
        .par_iter()
        .map(|s| {
            let f0 = solver.forward(s).unwrap();
            let df = solver.linearized(&f0, &zeros, &pert).unwrap();
            plan.detectors.iter().map(|psi| detector_response(psi, &df)).collect()
        })
        .collect();
    let mut worst = 0.0f64;
    for p in 0..a.n_rows() {
        let (k, d) = a.pair(p);
        let b = responses[d][k];
        let pred: f64 = a.row(p).iter().zip(&pert).map(|(r, s)| r * s).sum();
        worst = worst.max((pred - b).abs() / b.abs());
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        a.n_rows() == 160 && worst <= 1e-8 && secs <= 120.0,
        format!("{} pairs, worst relative residual {worst:.3e} (tol 1e-8), {secs:.1} s", a.n_rows()),
    )
}

fn variation(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|g| (g - mean).abs()).fold(0.0, f64::max) / mean.abs()
}

fn worst_flatness(n_x: usize) -> f64 {
    let cfg = ExperimentConfig { n_x, ..config(ProblemKind::ScatteringCritical) };
    let a = cfg.kernel(1.0).unwrap();
    (0..a.n_rows())
        .map(|p| {
            let dens: Vec<f64> = a.row(p).iter().zip(&a.weights).map(|(v, w)| v / w).collect();
            variation(&dens)
        })
        .fold(0.0, f64::max)
}

fn criterion_2() -> Outcome {
    let coarse = worst_flatness(200);
    let fine = worst_flatness(400);
    let reduction = coarse / fine;
    outcome(
        coarse <= 1e-3 && reduction >= 1.5,
        format!("worst variation {coarse:.3e} at n_x=200 (tol 1e-3), {fine:.3e} at n_x=400, reduction {reduction:.3} (need >= 1.5)"),
    )
}

fn criterion_3() -> Outcome {
    let cfg = config(ProblemKind::ScatteringSubcritical);
    let grid = cfg.grid().unwrap();
    let (s, _) = cfg.coefficients(&grid).unwrap();
    let mut pass = true;
    let mut medians = Vec::new();
    let mut parts = Vec::new();
    for kn in [0.25, 0.125, 0.0625] {
        let mask = InteriorMask::new(&grid, 5.0, kn, &s).unwrap();
        let reps = ratio_study(&cfg, kn, &mask).unwrap();
        let mut worst = 0.0f64;
        let mut all = Vec::new();
        for r in &reps {
            for (i, v) in r.indices.iter().zip(&r.ratio) {
                let x = grid.nodes()[*i];
                let predicted = kn / (kn * kn + 16.0 * sigma_s_ref(x) / (sigma_a_ref(x) / 16.0));
                worst = worst.max((v - predicted).abs() / predicted);
                all.push(*v);
            }
        }
        pass &= worst <= 0.05 && !all.is_empty();
        medians.push(median(&all));
        parts.push(format!("Kn={kn}: worst {:.2}%", 100.0 * worst));
    }
    let halvings: Vec<f64> = medians.windows(2).map(|w| w[0] / w[1]).collect();
    pass &= halvings.iter().all(|h| (h - 2.0).abs() <= 0.2);
    outcome(pass, format!("{}; median ratio per Kn halving {:.4}, {:.4}", parts.join(", "), halvings[0], halvings[1]))
}

fn spectra(kind: ProblemKind) -> Vec<(f64, SvdReport)> {
    let cfg = config(kind);
    let mask = cfg.sweep_mask().unwrap();
    cfg.kn_list.iter().map(|&kn| (kn, svd_report(&cfg.kernel(kn).unwrap(), Some(&mask), RANK_TOL))).collect()
}

fn structure(reps: &[(f64, SvdReport)]) -> (bool, String) {
    let counts: Vec<usize> = reps.iter().map(|(_, r)| r.count_above(10.0 * r.s(3))).collect();
    let gaps: Vec<f64> = reps.iter().map(|(_, r)| (r.s(2) / r.s(3)).log2()).collect();
    let pass = counts.iter().all(|&c| c == 3) && gaps.windows(2).all(|w| w[1] > w[0]);
    (pass, format!("counts above 10 s4 {counts:?}, log2(s3/s4) {:.2?}", gaps))
}

fn criterion_4(abs: &[(f64, SvdReport)]) -> Outcome {
    let (pa, da) = structure(abs);
    let (ps, ds) = structure(&spectra(ProblemKind::ScatteringSubcritical));
    outcome(pa && ps, format!("absorption: {da}; scattering: {ds}"))
}

fn criterion_5(abs: &[(f64, SvdReport)]) -> Outcome {
    // cond(A^T A) restricted to the dominant rank-3 part, (s1/s4)^2
    let pts: Vec<(f64, f64)> = abs.iter().map(|(kn, r)| ((1.0 / kn).ln(), (r.s(0) / r.s(3)).powi(2).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let monotone = pts.windows(2).all(|w| w[1].1 > w[0].1);
    let conds: Vec<String> = pts.iter().map(|p| format!("{:.3e}", p.1.exp())).collect();
    let full: Vec<String> = abs.iter().map(|(_, r)| format!("{:.1e}", (r.s(0) / r.singular_values.last().unwrap()).powi(2))).collect();
    outcome(
        monotone && slope >= 0.8,
        format!("(s1/s4)^2 = [{}], log-log slope {slope:.3} (need >= 0.8); full (s1/smin)^2 = [{}]", conds.join(", "), full.join(", ")),
    )
}

fn criterion_6() -> Outcome {
    let grid = SpatialGrid::uniform(200).unwrap();
    let pairs = boundary_pairs(64);
    let mut pass = true;
    let mut parts = Vec::new();
    for preset in [Preset::AbsTest, Preset::ScaSubcritical] {
        let (s, a) = preset.fields(&grid);
        let d = greens_rank_check(&s, &a, &grid, GreensMode::DiffusionProducts, &pairs).unwrap();
        let g = greens_rank_check(&s, &a, &grid, GreensMode::GradientProducts, &pairs).unwrap();
        pass &= d.rank == 3 && g.rank <= 3;
        parts.push(format!("{}: rank {} / gradient rank {}", preset.name(), d.rank, g.rank));
    }
    outcome(pass, format!("{} pairs, tau 1e-8; {}", pairs.len(), parts.join(", ")))
}

fn criterion_7() -> Outcome {
    let kns = [0.25, 0.125, 0.0625, 0.03125];
    let cfg = ExperimentConfig { kn_list: kns.to_vec(), ..config(ProblemKind::Absorption) };
    let mask = cfg.sweep_mask().unwrap();
    let errs: Vec<f64> = kns.iter().map(|&kn| diffusion_error(&cfg, kn, &mask).unwrap()).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let pass = errs.windows(2).all(|w| w[1] < w[0]) && orders.iter().all(|&o| o >= 0.8);
    outcome(pass, format!("interior errors {:.4?}, orders {:.3?} (need >= 0.8)", errs, orders))
}

fn criterion_8() -> Outcome {
    let mut worst_flux = 0.0f64;
    let mut worst_low = 0.0f64;
    let mut worst_high = 0.0f64;
    let mut n_solves = 0;
    for kind in [ProblemKind::Absorption, ProblemKind::ScatteringCritical, ProblemKind::ScatteringSubcritical] {
        for kn in [1.0, 0.25, 0.0625] {
            let cfg = config(kind);
            let problem = kind.background(&cfg.problem(kn).unwrap()).unwrap();
            let solver = TransportSolver::new(&problem, cfg.solver_options()).unwrap();
            let plan = cfg.plan(&problem.quad);
            let mut data = plan.sources.clone();
            data.push(BoundaryData::constant(&problem.quad, 1.0));
            data.push(BoundaryData::from_fn(&problem.quad, |m| m, |m| 1.0 - m, false));
            let results: Vec<(f64, f64, f64)> = data
                .par_iter()
                .map(|inflow| {
                    let f = solver.forward(inflow).unwrap();
                    let top = inflow.max();
                    let low = (-f.min()).max(0.0) / top;
                    let high = (f.max() - top).max(0.0) / top;
                    let flux = if problem.sigma_a.is_zero() {
                        // relative to the incoming partial current, since the
                        // net flux itself vanishes for symmetric data
                        let q = &problem.quad;
                        let incoming: f64 = (0..q.half()).map(|j| q.omega()[j] * q.mu()[j] * (inflow.left[j] + inflow.right[j])).sum();
                        let j: Vec<f64> = (0..f.n_x()).map(|i| f.flux(i)).collect();
                        j.iter().map(|v| (v - j[0]).abs()).fold(0.0, f64::max) / incoming
                    } else {
                        0.0
                    };
                    (flux, low, high)
                })
                .collect();
            for (flux, low, high) in results {
                worst_flux = worst_flux.max(flux);
                worst_low = worst_low.max(low);
                worst_high = worst_high.max(high);
                n_solves += 1;
            }
        }
    }
    // the bounds hold up to the solver's relative residual tolerance
    let tol = rte_inverse::transport::SolverOptions::default().tol;
    let pass = worst_flux <= 1e-8 && worst_low <= tol && worst_high <= tol;
    outcome(
        pass,
        format!("{n_solves} solves; critical flux variation {worst_flux:.2e} (tol 1e-8); undershoot {worst_low:.2e}, overshoot {worst_high:.2e} relative to max inflow (tol {tol:.0e})"),
    )
}

fn criterion_9() -> Outcome {
    // GMRES against a dense LU of the assembled operator
    let grid = SpatialGrid::uniform(50).unwrap();
    let quad = AngularQuadrature::gauss_legendre(40).unwrap();
    let (s, a) = Preset::AbsTest.fields(&grid);
    let problem = TransportProblem::new(grid, quad.clone(), s, a, 0.25).unwrap();
    let op = assemble_operator(&problem, Direction::Forward);
    let data = BoundaryData::from_fn(&quad, |m| 1.0 + m, |m| (PI * m).cos().abs(), false);
    let rhs = op.rhs(&data).unwrap();
    let dense = op.to_dense();
    let exact = dense.clone().lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
    let diag: Vec<f64> = (0..dense.nrows()).map(|i| dense[(i, i)]).collect();
    let out = gmres(|v| op.apply(v), |v| v.iter().zip(&diag).map(|(a, d)| a / d).collect(), &rhs, None, 100, 1e-13, 50_000);
    let diff: Vec<f64> = out.x.iter().zip(exact.iter()).map(|(a, b)| a - b).collect();
    let gmres_err = norm(&diff) / norm(exact.as_slice());

    // distinguishability against Monte-Carlo search on 8 x 5 systems
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_mc = 0.0f64;
    for _ in 0..20 {
        let m = DMatrix::from_fn(8, 5, |_, _| rng.random_range(-1.0..1.0));
        let sigma: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let delta = 1e-3;
        let est = estimate_distinguishability(&m, &sigma, delta).unwrap().kappa();
        let ratio = |c: &DVector<f64>| (&m * c).norm() / c.norm();
        let mut best = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let mut best_r = ratio(&best);
        for _ in 0..20_000 {
            let c = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
            let r = ratio(&c);
            if r < best_r {
                best = c;
                best_r = r;
            }
        }
        let mut step = 0.5;
        while step > 1e-6 {
            let mut improved = false;
            for _ in 0..200 {
                let c = &best + DVector::from_fn(5, |_, _| rng.random_range(-step..step)) * best.norm();
                let r = ratio(&c);
                if r < best_r {
                    best = c;
                    best_r = r;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        let mc = delta / (best_r * norm(&sigma));
        worst_mc = worst_mc.max((est - mc).abs() / mc);
    }

    // SVD reconstruction of the full-scale absorption kernel
    let cfg = config(ProblemKind::Absorption);
    let k = cfg.kernel(0.25).unwrap();
    let rep = svd_report(&k, None, RANK_TOL);
    let recon = (rep.reconstruct() - &k.entries).abs().max();
    let rel = recon / rep.s(0);

    outcome(
        out.converged && gmres_err <= 1e-8 && worst_mc <= 0.02 && rel <= 1e-10,
        format!(
            "GMRES vs dense {gmres_err:.2e} ({} its, dim {}); distinguishability vs Monte-Carlo worst relative {:.2e} (tol 2e-2); SVD reconstruction {rel:.2e} s1",
            out.iterations,
            rhs.len(),
            worst_mc
        ),
    )
}

fn criterion_10() -> Outcome {
    let cfg = config(ProblemKind::Absorption);
    let coarse = recovery_study(&cfg, 0.25).unwrap();
    let fine = recovery_study(&cfg, 0.0625).unwrap();
    outcome(
        fine.best_error > coarse.best_error,
        format!("best relative L2 error {:.4} at Kn=1/4, {:.4} at Kn=1/16", coarse.best_error, fine.best_error),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // cargo passes libtest flags; listing must not run the suite
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let start = Instant::now();
    let abs = spectra(ProblemKind::Absorption);
    let results: Vec<(usize, Outcome)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4(&abs)),
        (5, criterion_5(&abs)),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8()),
        (9, criterion_9()),
        (10, criterion_10()),
    ];
    let mut failed = 0;
    for (n, o) in &results {
        println!("criterion {n:>2}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed, {:.1} s", results.len() - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
