//! Independent oracles: transfer-matrix S_N solutions for constant
//! coefficients, finite differences of nonlinear data, dense algebra.

use nalgebra::{DMatrix, DVector};
use rte_inverse::conditioning::*;
use rte_inverse::kernel::*;
use rte_inverse::transport::{BlockLu, SolverKind, SolverOptions, TransportSolver};
use rte_inverse::*;
use std::f64::consts::PI;

/// `f(x)` at the requested points for `s v f' = (ss/kn)(<f> - f) - kn sa f`
/// on (0, 1), with `s = 1` forward and `s = -1` backward. Data are given on
/// the ordinates entering the slab for that direction.
fn transfer_oracle(quad: &AngularQuadrature, ss: f64, sa: f64, kn: f64, sign: f64, left: &[f64], right: &[f64], xs: &[f64]) -> Vec<DVector<f64>> {
    let v = quad.ordinates();
    let w = quad.weights();
    let n = v.len();
    let m = n / 2;
    let gen = DMatrix::from_fn(n, n, |j, k| {
        let diag = if j == k { ss / kn + kn * sa } else { 0.0 };
        sign * ((ss / kn) * w[k] - diag) / v[j]
    });
    // entering at x = 0: v > 0 forward, v < 0 backward
    let enters_left = |j: usize| (v[j] > 0.0) == (sign > 0.0);
    let slot = |j: usize| if v[j] > 0.0 { j - m } else { m - 1 - j };
    let mut f0 = DVector::zeros(n);
    let unknown: Vec<usize> = (0..n).filter(|&j| !enters_left(j)).collect();
    for j in 0..n {
        if enters_left(j) {
            f0[j] = left[slot(j)];
        }
    }
    let e = gen.clone().exp();
    let ef0 = &e * &f0;
    // rows entering at x = 1 must hit the right data
    let a = DMatrix::from_fn(m, m, |r, c| e[(unknown[r], unknown[c])]);
    let b = DVector::from_fn(m, |r, _| right[slot(unknown[r])] - ef0[unknown[r]]);
    let y = a.lu().solve(&b).unwrap();
    for (c, &j) in unknown.iter().enumerate() {
        f0[j] = y[c];
    }
    xs.iter().map(|&x| (gen.clone() * x).exp() * &f0).collect()
}

fn constant_problem(n_x: usize, n_v: usize, ss: f64, sa: f64, kn: f64) -> TransportProblem {
    let grid = SpatialGrid::uniform(n_x).unwrap();
    let quad = AngularQuadrature::gauss_legendre(n_v).unwrap();
    let s = CoefficientField::constant(&grid, ss);
    let a = CoefficientField::constant(&grid, sa);
    TransportProblem::new(grid, quad, s, a, kn).unwrap()
}

#[test]
fn forward_matches_transfer_matrix_solution() {
    for (n_x, ss, sa, kn) in [(5, 1.0, 0.5, 1.0), (11, 2.0, 1.0, 0.5), (3, 0.7, 0.0, 1.0)] {
        let p = constant_problem(n_x, 6, ss, sa, kn);
        let left = [1.0, 0.2, 0.5];
        let right = [0.0, 2.0, 0.3];
        let data = BoundaryData { left: left.to_vec(), right: right.to_vec() };
        let f = solve_forward(&p, &data).unwrap();
        let oracle = transfer_oracle(&p.quad, ss, sa, kn, 1.0, &left, &right, p.grid.nodes());
        for i in 0..n_x {
            for j in 0..6 {
                let d = (f.value(i, j) - oracle[i][j]).abs();
                assert!(d < 1e-10, "n_x={n_x} node {i} ordinate {j}: {} vs {}", f.value(i, j), oracle[i][j]);
            }
        }
    }
}

#[test]
fn adjoint_matches_transfer_matrix_solution() {
    let (ss, sa, kn) = (1.5, 0.8, 0.75);
    let p = constant_problem(9, 6, ss, sa, kn);
    let left = [0.0, 1.0, 0.0];
    let right = [0.4, 0.0, 1.0];
    let data = BoundaryData { left: left.to_vec(), right: right.to_vec() };
    let oracle = transfer_oracle(&p.quad, ss, sa, kn, -1.0, &left, &right, p.grid.nodes());
    for mode in [AdjointMode::Continuous, AdjointMode::Algebraic] {
        let g = solve_adjoint(&p, &data, mode).unwrap();
        for i in 0..9 {
            for j in 0..6 {
                assert!((g.value(i, j) - oracle[i][j]).abs() < 1e-9, "{mode:?} ({i}, {j})");
            }
        }
    }
}

#[test]
fn kernel_rows_match_central_differences() {
    let grid = SpatialGrid::uniform(40).unwrap();
    let quad = AngularQuadrature::gauss_legendre(8).unwrap();
    for kind in [ProblemKind::Absorption, ProblemKind::ScatteringSubcritical] {
        let (s, a) = kind.default_preset().fields(&grid);
        let problem = TransportProblem::new(grid.clone(), quad.clone(), s, a, 0.25).unwrap();
        let plan = SourceDetectorPlan::velocity_deltas(&quad, DeltaScaling::InverseWeight);
        let kernel = assemble_kernel_matrix(&problem, &plan, kind, KernelOptions::default()).unwrap();
        let pert = CoefficientField::from_fn(&grid, |x| 0.1 * (PI * x).sin());
        let eps = 1e-3;
        let data = |e: f64| {
            synthesize_data(&problem, &pert.scaled(e), &plan, kind, DataMode::Nonlinear, Default::default()).unwrap().values
        };
        let (bp, bm) = (data(eps), data(-eps));
        let fd: Vec<f64> = bp.iter().zip(&bm).map(|(p, m)| (p - m) / (2.0 * eps)).collect();
        let pred = kernel.apply(pert.values());
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (p, (a, b)) in pred.iter().zip(&fd).enumerate() {
            assert!((a - b).abs() < 1e-5 * scale, "{kind:?} row {p}: {a} vs {b}");
        }
    }
}

#[test]
fn block_lu_matches_dense_solve() {
    let grid = SpatialGrid::uniform(50).unwrap();
    let quad = AngularQuadrature::gauss_legendre(40).unwrap();
    let (s, a) = Preset::ScaSubcritical.fields(&grid);
    let p = TransportProblem::new(grid, quad.clone(), s, a, 0.0625).unwrap();
    let op = assemble_operator(&p, Direction::Forward);
    let rhs = op.rhs(&BoundaryData::from_fn(&quad, |m| m * m, |m| 1.0 - m, false)).unwrap();
    let x = BlockLu::factor(&op).unwrap().solve(&rhs).unwrap();
    let exact = op.to_dense().lu().solve(&DVector::from_vec(rhs)).unwrap();
    let err = x.iter().zip(exact.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10 * exact.amax(), "{err}");
}

#[test]
fn gmres_option_matches_direct() {
    let grid = SpatialGrid::uniform(30).unwrap();
    let quad = AngularQuadrature::gauss_legendre(16).unwrap();
    let (s, a) = Preset::AbsTest.fields(&grid);
    let p = TransportProblem::new(grid, quad.clone(), s, a, 0.125).unwrap();
    let data = BoundaryData::constant(&quad, 1.0);
    let direct = TransportSolver::new(&p, SolverOptions::default()).unwrap().forward(&data).unwrap();
    let opts = SolverOptions { kind: SolverKind::Gmres, ..Default::default() };
    let iter = TransportSolver::new(&p, opts).unwrap().forward(&data).unwrap();
    for (a, b) in direct.values().iter().zip(iter.values()) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn svd_reconstructs_kernel() {
    let grid = SpatialGrid::uniform(60).unwrap();
    let quad = AngularQuadrature::gauss_legendre(16).unwrap();
    let (s, a) = Preset::AbsTest.fields(&grid);
    let p = TransportProblem::new(grid, quad.clone(), s, a, 0.25).unwrap();
    let plan = SourceDetectorPlan::velocity_deltas(&quad, DeltaScaling::InverseWeight);
    let k = assemble_kernel_matrix(&p, &plan, ProblemKind::Absorption, KernelOptions::default()).unwrap();
    let rep = svd_report(&k, None, RANK_TOL);
    let err = (rep.reconstruct() - &k.entries).amax();
    assert!(err <= 1e-10 * rep.s(0));
    assert!(rep.singular_values.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn duality_residual_is_small_for_both_kinds() {
    let grid = SpatialGrid::uniform(40).unwrap();
    let quad = AngularQuadrature::gauss_legendre(8).unwrap();
    for kind in [ProblemKind::Absorption, ProblemKind::ScatteringSubcritical] {
        let (s, a) = kind.default_preset().fields(&grid);
        let problem = TransportProblem::new(grid.clone(), quad.clone(), s, a, 0.125).unwrap();
        let plan = SourceDetectorPlan::velocity_deltas(&quad, DeltaScaling::InverseWeight);
        let pert = CoefficientField::from_fn(&grid, |x| 0.1 * (PI * x).sin());
        for (k, d) in [(0, 0), (1, 5), (0, 7)] {
            let r = duality_residual(&problem, &plan, k, d, &pert, kind, AdjointMode::Algebraic).unwrap();
            assert!(r < 1e-9, "{kind:?} ({k}, {d}): {r}");
        }
    }
}

#[test]
fn absorption_kernel_is_nonpositive() {
    let grid = SpatialGrid::uniform(30).unwrap();
    let quad = AngularQuadrature::gauss_legendre(8).unwrap();
    let (s, a) = Preset::AbsTest.fields(&grid);
    let p = TransportProblem::new(grid.clone(), quad.clone(), s, a, 0.25).unwrap();
    let plan = SourceDetectorPlan::velocity_deltas(&quad, DeltaScaling::InverseWeight);
    let k = assemble_kernel_matrix(&p, &plan, ProblemKind::Absorption, KernelOptions::default()).unwrap();
    assert!(k.entries.iter().all(|v| *v <= 0.0));
    // nonnegative absorption perturbation can only lower the outflow
    let b = synthesize_data(&p, &CoefficientField::constant(&grid, 0.05), &plan, ProblemKind::Absorption, DataMode::Nonlinear, Default::default()).unwrap();
    assert!(b.values.iter().all(|v| *v <= 0.0));
}

#[test]
fn preset_values() {
    assert!((Preset::AbsTest.sigma_s(0.0) - 5.0 / 3.0).abs() < 1e-15);
    assert!((Preset::AbsTest.sigma_a(0.0) - 4.0).abs() < 1e-15);
    assert_eq!(Preset::ScaCritical.sigma_a(0.3), 0.0);
    assert!((Preset::ScaSubcritical.sigma_a(0.0) - 0.25).abs() < 1e-15);
    assert!((Preset::ScaSubcritical.sigma_s(0.0) - 16.0 * 5.0 / 3.0).abs() < 1e-13);
}

#[test]
fn halfspace_value_is_stable_and_bounded() {
    let quad = AngularQuadrature::gauss_legendre(16).unwrap();
    let phi: Vec<f64> = quad.mu().iter().map(|m| 1.0 + m).collect();
    let r = rte_inverse::diffusion::halfspace_limit(&rte_inverse::diffusion::HalfSpaceProblem::new(1.0, phi.clone(), quad, 50.0, rte_inverse::diffusion::Closure::Specular).unwrap()).unwrap();
    let (lo, hi) = phi.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    assert!(r.xi > lo && r.xi < hi);
    assert!(r.sensitivity < 1e-3);
    // a constant profile is reproduced exactly
    let quad = AngularQuadrature::gauss_legendre(16).unwrap();
    let c = rte_inverse::diffusion::halfspace_limit(&rte_inverse::diffusion::HalfSpaceProblem::new(1.0, vec![2.5; 8], quad, 50.0, rte_inverse::diffusion::Closure::Specular).unwrap()).unwrap();
    assert!((c.xi - 2.5).abs() < 1e-10);
}
