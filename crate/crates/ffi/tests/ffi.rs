use rte_inverse_ffi::*;
use std::ffi::CString;
use std::ptr;

fn preset_problem(n_x: usize, n_v: usize, kn: f64, name: &str) -> *mut RteProblem {
    let name = CString::new(name).unwrap();
    let mut p = ptr::null_mut();
    let st = unsafe { rte_problem_new_preset(n_x, n_v, kn, name.as_ptr(), &mut p) };
    assert_eq!(st, RteStatus::Ok);
    assert!(!p.is_null());
    p
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { rte_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn unit_inflow_without_absorption_is_one() {
    let sa = CString::new("0").unwrap();
    let ss = CString::new("1 + 1/(1.5 + sin(2*pi*x))").unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { rte_problem_new_expr(3, 2, 0.25, ss.as_ptr(), sa.as_ptr(), &mut p) }, RteStatus::Ok);
    let (mut nx, mut nv) = (0, 0);
    assert_eq!(unsafe { rte_problem_dims(p, &mut nx, &mut nv) }, RteStatus::Ok);
    assert_eq!((nx, nv), (3, 2));
    let one = [1.0];
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { rte_solve_forward(p, one.as_ptr(), one.as_ptr(), 1, &mut s) }, RteStatus::Ok);
    let n = unsafe { rte_solution_len(s) };
    assert_eq!(n, 6);
    let mut v = vec![0.0; n];
    assert_eq!(unsafe { rte_solution_values(s, v.as_mut_ptr(), n) }, RteStatus::Ok);
    assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-9), "{v:?}");
    let mut j = 1.0;
    assert_eq!(unsafe { rte_solution_flux(s, 1, &mut j) }, RteStatus::Ok);
    assert!(j.abs() < 1e-12);
    unsafe {
        rte_solution_free(s);
        rte_problem_free(p);
    }
}

#[test]
fn adjoint_measure_matches_forward_measure() {
    let p = preset_problem(20, 8, 0.25, "abs-test");
    let m = 4;
    let left = [0.3, 1.0, 0.0, 2.0];
    let right = [0.0; 4];
    let psi_l = [0.0; 4];
    let psi_r = [1.0; 4];
    let (mut f, mut g) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(rte_solve_forward(p, left.as_ptr(), right.as_ptr(), m, &mut f), RteStatus::Ok);
        assert_eq!(rte_solve_adjoint(p, psi_l.as_ptr(), psi_r.as_ptr(), m, RteAdjointMode::Algebraic, &mut g), RteStatus::Ok);
    }
    let mut out = 0.0;
    assert_eq!(unsafe { rte_solution_measure(f, RteEndpoint::Right, &mut out) }, RteStatus::Ok);
    // <psi, f_out> = <g(0, +mu), phi>
    let n_v = 8;
    let mut gv = vec![0.0; 20 * n_v];
    assert_eq!(unsafe { rte_solution_values(g, gv.as_mut_ptr(), gv.len()) }, RteStatus::Ok);
    let quad = rte_inverse::AngularQuadrature::gauss_legendre(n_v).unwrap();
    let dual: f64 = (0..m).map(|j| quad.omega()[j] * quad.mu()[j] * gv[quad.pos_index(j)] * left[j]).sum();
    let direct: f64 = (0..m).map(|j| {
        let mut fv = vec![0.0; 20 * n_v];
        unsafe { rte_solution_values(f, fv.as_mut_ptr(), fv.len()) };
        quad.omega()[j] * quad.mu()[j] * fv[19 * n_v + quad.pos_index(j)]
    }).sum();
    assert!((dual - direct).abs() < 1e-10 * direct.abs(), "{dual} vs {direct}");
    assert!(out.is_finite());
    unsafe {
        rte_solution_free(f);
        rte_solution_free(g);
        rte_problem_free(p);
    }
}

#[test]
fn kernel_round_trip() {
    let p = preset_problem(30, 8, 0.25, "abs-test");
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { rte_kernel_assemble(p, RteKind::Absorption, &mut k) }, RteStatus::Ok);
    let (mut r, mut c) = (0, 0);
    assert_eq!(unsafe { rte_kernel_shape(k, &mut r, &mut c) }, RteStatus::Ok);
    assert_eq!((r, c), (16, 30));
    let mut e = vec![0.0; r * c];
    assert_eq!(unsafe { rte_kernel_entries(k, e.as_mut_ptr(), e.len()) }, RteStatus::Ok);
    assert!(e.iter().all(|v| *v <= 0.0) && e.iter().any(|v| *v < 0.0));
    let mut small = vec![0.0; 3];
    assert_eq!(unsafe { rte_kernel_entries(k, small.as_mut_ptr(), small.len()) }, RteStatus::BufferTooSmall);
    let mut s = vec![0.0; 16];
    let mut n = 0;
    assert_eq!(unsafe { rte_kernel_singular_values(k, s.as_mut_ptr(), s.len(), &mut n) }, RteStatus::Ok);
    assert_eq!(n, 16);
    assert!(s.windows(2).all(|w| w[0] >= w[1]));
    unsafe {
        rte_kernel_free(k);
        rte_problem_free(p);
    }
}

#[test]
fn errors_are_reported() {
    let bad = CString::new("no-such-preset").unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { rte_problem_new_preset(10, 4, 0.25, bad.as_ptr(), &mut p) }, RteStatus::InvalidArgument);
    assert!(p.is_null());
    assert!(last_error().contains("no-such-preset"));

    let neg = CString::new("-1").unwrap();
    let one = CString::new("1").unwrap();
    assert_eq!(unsafe { rte_problem_new_expr(10, 4, 0.25, neg.as_ptr(), one.as_ptr(), &mut p) }, RteStatus::InvalidArgument);
    assert_eq!(unsafe { rte_problem_new_preset(10, 4, 0.25, ptr::null(), &mut p) }, RteStatus::NullPointer);

    let p = preset_problem(10, 4, 0.25, "sca-critical");
    let mut s = ptr::null_mut();
    let a = [1.0; 3];
    assert_eq!(unsafe { rte_solve_forward(p, a.as_ptr(), a.as_ptr(), 3, &mut s) }, RteStatus::InvalidArgument);
    assert!(last_error().contains("n_v/2"));
    let sa = [1.0; 10];
    let ss = [-1.0; 10];
    let mut q = ptr::null_mut();
    assert_eq!(unsafe { rte_problem_new_nodal(10, 4, 0.25, ss.as_ptr(), sa.as_ptr(), &mut q) }, RteStatus::InvalidArgument);
    unsafe {
        rte_problem_free(p);
        rte_problem_free(ptr::null_mut());
        rte_solution_free(ptr::null_mut());
        rte_kernel_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/rte_inverse.h")).unwrap();
    for name in [
        "rte_last_error_message",
        "rte_problem_new_preset",
        "rte_problem_new_expr",
        "rte_problem_new_nodal",
        "rte_problem_free",
        "rte_problem_dims",
        "rte_solve_forward",
        "rte_solve_adjoint",
        "rte_solution_free",
        "rte_solution_len",
        "rte_solution_values",
        "rte_solution_flux",
        "rte_solution_measure",
        "rte_kernel_assemble",
        "rte_kernel_free",
        "rte_kernel_shape",
        "rte_kernel_entries",
        "rte_kernel_singular_values",
        "typedef struct RteProblem RteProblem",
        "RTE_STATUS_SOLVER_FAILURE = 3",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = std::env::temp_dir().join(format!("rte_ffi_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("probe.c");
    std::fs::write(&src, "#include \"rte_inverse.h\"\nint main(void) { RteProblem *p = 0; rte_problem_free(p); return RTE_STATUS_OK; }\n").unwrap();
    let st = std::process::Command::new(cc)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&src)
        .status()
        .unwrap();
    assert!(st.success());
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}
