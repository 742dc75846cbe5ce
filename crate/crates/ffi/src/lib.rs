//! C ABI over `rte_inverse`. Handles are opaque and owned by the caller
//! once returned; release them with the matching `*_free`. Every fallible
//! call returns an `RteStatus` and leaves a message retrievable with
//! `rte_last_error_message`.

use rte_inverse::conditioning::{SvdReport, RANK_TOL};
use rte_inverse::kernel::{KernelMatrix, KernelOptions, ProblemKind, SourceDetectorPlan, DeltaScaling};
use rte_inverse::transport::SolverOptions;
use rte_inverse::{
    AdjointMode, AngularQuadrature, BoundaryData, CoefficientField, Endpoint, Error, Expression, Preset,
    SpatialGrid, TransportProblem, TransportSolution, TransportSolver,
};
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RteStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SolverFailure = 3,
    BufferTooSmall = 4,
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RteKind {
    Absorption = 0,
    ScatteringCritical = 1,
    ScatteringSubcritical = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RteAdjointMode {
    Continuous = 0,
    Algebraic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RteEndpoint {
    Left = 0,
    Right = 1,
}

/// A transport problem with its factorized solver.
pub struct RteProblem {
    solver: TransportSolver,
}

pub struct RteSolution {
    inner: TransportSolution,
}

pub struct RteKernel {
    inner: KernelMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: RteStatus, msg: impl Into<String>) -> RteStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> RteStatus {
    let status = match e {
        Error::SolverFailure { .. } => RteStatus::SolverFailure,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => RteStatus::Internal,
        _ => RteStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> RteStatus) -> RteStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RteStatus::Internal, "panic inside rte_inverse"),
    }
}

unsafe fn c_str<'a>(p: *const c_char) -> Result<&'a str, RteStatus> {
    if p.is_null() {
        return Err(fail(RteStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(RteStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn slice<'a>(p: *const f64, n: usize) -> Result<&'a [f64], RteStatus> {
    if p.is_null() {
        return Err(fail(RteStatus::NullPointer, "null input array"));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn write_out(src: &[f64], buf: *mut f64, len: usize) -> RteStatus {
    if buf.is_null() {
        return fail(RteStatus::NullPointer, "null output buffer");
    }
    if len < src.len() {
        return fail(RteStatus::BufferTooSmall, format!("buffer holds {len}, need {}", src.len()));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    RteStatus::Ok
}

fn make_problem(n_x: usize, n_v: usize, kn: f64, s: CoefficientSpec, a: CoefficientSpec) -> rte_inverse::Result<RteProblem> {
    let grid = SpatialGrid::uniform(n_x)?;
    let quad = AngularQuadrature::gauss_legendre(n_v)?;
    let sigma_s = s.sample(&grid);
    let sigma_a = a.sample(&grid);
    let problem = TransportProblem::new(grid, quad, sigma_s, sigma_a, kn)?;
    Ok(RteProblem { solver: TransportSolver::new(&problem, SolverOptions::default())? })
}

enum CoefficientSpec {
    Field(CoefficientField),
    Expr(Expression),
    Fn(Box<dyn Fn(f64) -> f64>),
}

impl CoefficientSpec {
    fn sample(self, grid: &SpatialGrid) -> CoefficientField {
        match self {
            CoefficientSpec::Field(f) => f,
            CoefficientSpec::Expr(e) => e.sample(grid),
            CoefficientSpec::Fn(f) => CoefficientField::from_fn(grid, f),
        }
    }
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rte_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Problem from a preset name (`abs-test`, `sca-critical`, `sca-subcritical`).
///
/// # Safety
/// `preset` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rte_problem_new_preset(
    n_x: usize,
    n_v: usize,
    kn: f64,
    preset: *const c_char,
    out: *mut *mut RteProblem,
) -> RteStatus {
    guard(|| {
        if out.is_null() {
            return fail(RteStatus::NullPointer, "null output handle");
        }
        let name = match c_str(preset) {
            Ok(s) => s,
            Err(e) => return e,
        };
        let p = match Preset::from_name(name) {
            Ok(p) => p,
            Err(e) => return from_error(e),
        };
        match make_problem(n_x, n_v, kn, CoefficientSpec::Fn(Box::new(move |x| p.sigma_s(x))), CoefficientSpec::Fn(Box::new(move |x| p.sigma_a(x)))) {
            Ok(h) => {
                *out = Box::into_raw(Box::new(h));
                RteStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Problem from two expressions in `x`.
///
/// # Safety
/// Both strings must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rte_problem_new_expr(
    n_x: usize,
    n_v: usize,
    kn: f64,
    sigma_s: *const c_char,
    sigma_a: *const c_char,
    out: *mut *mut RteProblem,
) -> RteStatus {
    guard(|| {
        if out.is_null() {
            return fail(RteStatus::NullPointer, "null output handle");
        }
        let (s, a) = match (c_str(sigma_s), c_str(sigma_a)) {
            (Ok(s), Ok(a)) => (s, a),
            (Err(e), _) | (_, Err(e)) => return e,
        };
        let parsed = Expression::parse(s).and_then(|s| Ok((s, Expression::parse(a)?)));
        let (s, a) = match parsed {
            Ok(v) => v,
            Err(e) => return from_error(e),
        };
        match make_problem(n_x, n_v, kn, CoefficientSpec::Expr(s), CoefficientSpec::Expr(a)) {
            Ok(h) => {
                *out = Box::into_raw(Box::new(h));
                RteStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Problem from nodal coefficient arrays of length `n_x`.
///
/// # Safety
/// `sigma_s` and `sigma_a` must point to `n_x` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rte_problem_new_nodal(
    n_x: usize,
    n_v: usize,
    kn: f64,
    sigma_s: *const f64,
    sigma_a: *const f64,
    out: *mut *mut RteProblem,
) -> RteStatus {
    guard(|| {
        if out.is_null() {
            return fail(RteStatus::NullPointer, "null output handle");
        }
        let (s, a) = match (slice(sigma_s, n_x), slice(sigma_a, n_x)) {
            (Ok(s), Ok(a)) => (s, a),
            (Err(e), _) | (_, Err(e)) => return e,
        };
        let s = CoefficientSpec::Field(CoefficientField::new(s.to_vec()));
        let a = CoefficientSpec::Field(CoefficientField::new(a.to_vec()));
        match make_problem(n_x, n_v, kn, s, a) {
            Ok(h) => {
                *out = Box::into_raw(Box::new(h));
                RteStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `p` must be null or a handle from `rte_problem_new_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rte_problem_free(p: *mut RteProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` must be a live handle; `n_x` and `n_v` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rte_problem_dims(p: *const RteProblem, n_x: *mut usize, n_v: *mut usize) -> RteStatus {
    if p.is_null() || n_x.is_null() || n_v.is_null() {
        return fail(RteStatus::NullPointer, "null argument");
    }
    let pr = (*p).solver.problem();
    *n_x = pr.grid.n_x();
    *n_v = pr.quad.n_v();
    RteStatus::Ok
}

unsafe fn boundary(p: &RteProblem, left: *const f64, right: *const f64, m: usize) -> Result<BoundaryData, RteStatus> {
    let half = p.solver.problem().quad.half();
    if m != half {
        return Err(fail(RteStatus::InvalidArgument, format!("boundary arrays must have n_v/2 = {half} entries, got {m}")));
    }
    Ok(BoundaryData { left: slice(left, m)?.to_vec(), right: slice(right, m)?.to_vec() })
}

fn finish(r: rte_inverse::Result<TransportSolution>, out: *mut *mut RteSolution) -> RteStatus {
    match r {
        Ok(s) => {
            unsafe { *out = Box::into_raw(Box::new(RteSolution { inner: s })) };
            RteStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Forward solve. `left[j]` is the inflow at x = 0 along +mu_j and
/// `right[j]` at x = 1 along -mu_j, mu_j ascending, `m = n_v / 2`.
///
/// # Safety
/// `p` must be live; `left` and `right` must point to `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn rte_solve_forward(
    p: *const RteProblem,
    left: *const f64,
    right: *const f64,
    m: usize,
    out: *mut *mut RteSolution,
) -> RteStatus {
    guard(|| {
        if p.is_null() || out.is_null() {
            return fail(RteStatus::NullPointer, "null argument");
        }
        let data = match boundary(&*p, left, right, m) {
            Ok(d) => d,
            Err(e) => return e,
        };
        finish((*p).solver.forward(&data), out)
    })
}

/// Adjoint solve with outflow data: `left[j]` weights g(0, -mu_j) and
/// `right[j]` weights g(1, +mu_j).
///
/// # Safety
/// As for `rte_solve_forward`.
#[no_mangle]
pub unsafe extern "C" fn rte_solve_adjoint(
    p: *const RteProblem,
    left: *const f64,
    right: *const f64,
    m: usize,
    mode: RteAdjointMode,
    out: *mut *mut RteSolution,
) -> RteStatus {
    guard(|| {
        if p.is_null() || out.is_null() {
            return fail(RteStatus::NullPointer, "null argument");
        }
        let data = match boundary(&*p, left, right, m) {
            Ok(d) => d,
            Err(e) => return e,
        };
        let mode = match mode {
            RteAdjointMode::Continuous => AdjointMode::Continuous,
            RteAdjointMode::Algebraic => AdjointMode::Algebraic,
        };
        finish((*p).solver.adjoint(&data, mode), out)
    })
}

/// # Safety
/// `s` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn rte_solution_free(s: *mut RteSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of values, `n_x * n_v`.
///
/// # Safety
/// `s` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn rte_solution_len(s: *const RteSolution) -> usize {
    if s.is_null() {
        return 0;
    }
    (*s).inner.values().len()
}

/// Values node-major: entry `i * n_v + j` is f(x_i, v_j), v ascending.
///
/// # Safety
/// `s` must be live; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rte_solution_values(s: *const RteSolution, buf: *mut f64, len: usize) -> RteStatus {
    if s.is_null() {
        return fail(RteStatus::NullPointer, "null solution");
    }
    write_out((*s).inner.values(), buf, len)
}

/// Net flux sum_j w_j v_j f(x_i, v_j) at node `i`.
///
/// # Safety
/// `s` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rte_solution_flux(s: *const RteSolution, i: usize, out: *mut f64) -> RteStatus {
    if s.is_null() || out.is_null() {
        return fail(RteStatus::NullPointer, "null argument");
    }
    if i >= (*s).inner.n_x() {
        return fail(RteStatus::InvalidArgument, format!("node {i} out of range"));
    }
    *out = (*s).inner.flux(i);
    RteStatus::Ok
}

/// Outgoing measurement at an endpoint.
///
/// # Safety
/// `s` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rte_solution_measure(s: *const RteSolution, end: RteEndpoint, out: *mut f64) -> RteStatus {
    if s.is_null() || out.is_null() {
        return fail(RteStatus::NullPointer, "null argument");
    }
    *out = (*s).inner.measure(match end {
        RteEndpoint::Left => Endpoint::Left,
        RteEndpoint::Right => Endpoint::Right,
    });
    RteStatus::Ok
}

/// Kernel for the velocity-delta plan (inverse-weight scaling, weights
/// included, algebraic adjoint).
///
/// # Safety
/// `p` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rte_kernel_assemble(p: *const RteProblem, kind: RteKind, out: *mut *mut RteKernel) -> RteStatus {
    guard(|| {
        if p.is_null() || out.is_null() {
            return fail(RteStatus::NullPointer, "null argument");
        }
        let kind = match kind {
            RteKind::Absorption => ProblemKind::Absorption,
            RteKind::ScatteringCritical => ProblemKind::ScatteringCritical,
            RteKind::ScatteringSubcritical => ProblemKind::ScatteringSubcritical,
        };
        let problem = (*p).solver.problem();
        let plan = SourceDetectorPlan::velocity_deltas(&problem.quad, DeltaScaling::InverseWeight);
        match rte_inverse::kernel::assemble_kernel_matrix(problem, &plan, kind, KernelOptions::default()) {
            Ok(k) => {
                *out = Box::into_raw(Box::new(RteKernel { inner: k }));
                RteStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `k` must be null or a live kernel handle.
#[no_mangle]
pub unsafe extern "C" fn rte_kernel_free(k: *mut RteKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// # Safety
/// `k` must be live; `rows` and `cols` valid.
#[no_mangle]
pub unsafe extern "C" fn rte_kernel_shape(k: *const RteKernel, rows: *mut usize, cols: *mut usize) -> RteStatus {
    if k.is_null() || rows.is_null() || cols.is_null() {
        return fail(RteStatus::NullPointer, "null argument");
    }
    *rows = (*k).inner.n_rows();
    *cols = (*k).inner.n_cols();
    RteStatus::Ok
}

/// Entries row-major; row `p = k * n_sources + d`.
///
/// # Safety
/// `k` must be live; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rte_kernel_entries(k: *const RteKernel, buf: *mut f64, len: usize) -> RteStatus {
    if k.is_null() {
        return fail(RteStatus::NullPointer, "null kernel");
    }
    let a = &(*k).inner.entries;
    let row_major: Vec<f64> = (0..a.nrows()).flat_map(|i| (0..a.ncols()).map(move |j| a[(i, j)])).collect();
    write_out(&row_major, buf, len)
}

/// Singular values in descending order; `written` receives their count
/// (`min(rows, cols)`).
///
/// # Safety
/// `k` must be live; `buf` must point to `len` doubles; `written` valid.
#[no_mangle]
pub unsafe extern "C" fn rte_kernel_singular_values(
    k: *const RteKernel,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> RteStatus {
    guard(|| {
        if k.is_null() || written.is_null() {
            return fail(RteStatus::NullPointer, "null argument");
        }
        let rep = SvdReport::of_matrix(&(*k).inner.entries, RANK_TOL);
        *written = rep.singular_values.len();
        write_out(&rep.singular_values, buf, len)
    })
}
