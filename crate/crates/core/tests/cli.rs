use rte_inverse::cli::{run, EXIT_CHECK, EXIT_OK, EXIT_USAGE};
use rte_inverse::output::read_rows;
use std::path::{Path, PathBuf};
use std::process::Command;

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("rte_cli_{}_{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn cli(args: &[&str], out: &Path) -> i32 {
    let mut v = vec!["rte-inverse".to_string()];
    v.extend(args.iter().map(|s| s.to_string()));
    v.push("--out".into());
    v.push(out.display().to_string());
    run(v)
}

#[test]
fn unit_inflow_without_absorption() {
    let out = scratch("fwd");
    assert_eq!(cli(&["forward", "--nx", "3", "--nv", "2", "--sigma-a", "0", "--inflow", "const:1", "--check"], &out), EXIT_OK);
    let (header, rows) = read_rows(&out.join("forward.csv")).unwrap();
    assert_eq!(header, ["x", "v", "f"]);
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| (r[2] - 1.0).abs() < 1e-9));
}

#[test]
fn flatness_prints_one_number() {
    let exe = env!("CARGO_BIN_EXE_rte-inverse");
    let out = scratch("flat");
    let o = Command::new(exe)
        .args(["flatness", "--kind", "scattering-critical", "--kn", "1", "--nx", "60", "--nv", "16", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1);
    let v: f64 = lines[0].trim().parse().unwrap();
    assert!(v <= 1e-3);
}

#[test]
fn usage_errors_exit_2() {
    let out = scratch("usage");
    assert_eq!(cli(&["forward", "--sigma-s", "no-such-preset"], &out), EXIT_USAGE);
    assert_eq!(cli(&["forward", "--no-such-flag"], &out), EXIT_USAGE);
    assert_eq!(cli(&["frobnicate"], &out), EXIT_USAGE);
    assert_eq!(cli(&["forward", "--inflow", "delta:left:0"], &out), EXIT_USAGE);
    assert_eq!(cli(&["forward", "--kn", "-1"], &out), EXIT_USAGE);
    assert_eq!(cli(&["forward", "--sigma-a", "exp(x)"], &out), EXIT_USAGE);
    let bad = out.join("bad.toml");
    std::fs::write(&bad, "n_x = 10\nmystery = 3\n").unwrap();
    assert_eq!(cli(&["forward", "--config", bad.to_str().unwrap()], &out), EXIT_USAGE);
}

#[test]
fn failed_check_exits_4() {
    // the full absorption kernel has no clean three-value gap
    let out = scratch("check");
    assert_eq!(cli(&["svd", "--nx", "40", "--nv", "8", "--kn", "0.25", "--check"], &out), EXIT_CHECK);
    assert!(out.join("svd_kn0.25.csv").exists());
}

#[test]
fn config_file_and_flag_override() {
    let out = scratch("cfg");
    let cfg = out.join("run.toml");
    std::fs::write(&cfg, "n_x = 12\nn_v = 4\nkn_list = [0.5]\nsigma_a = \"0\"\n").unwrap();
    assert_eq!(cli(&["forward", "--config", cfg.to_str().unwrap(), "--nx", "7"], &out), EXIT_OK);
    let (_, rows) = read_rows(&out.join("forward.csv")).unwrap();
    assert_eq!(rows.len(), 7 * 4);
}

#[test]
fn kernel_and_sweep_artifacts() {
    let out = scratch("sweep");
    assert_eq!(cli(&["sweep", "--nx", "30", "--nv", "8", "--kn", "0.25,0.125"], &out), EXIT_OK);
    for f in ["kernel_kn0.25.csv", "svd_kn0.125.csv", "vectors_kn0.25.csv", "data_kn0.125.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let (h, rows) = read_rows(&out.join("data_kn0.25.csv")).unwrap();
    assert_eq!(h, ["k", "d", "b"]);
    assert_eq!(rows.len(), 16);
}

#[test]
fn other_subcommands_run() {
    let out = scratch("misc");
    let small = ["--nx", "40", "--nv", "8"];
    for cmd in [
        vec!["adjoint", "--detector", "left", "--check"],
        vec!["kernel", "--kind", "scattering-subcritical"],
        vec!["svd", "--interior"],
        vec!["ratio"],
        vec!["diffusion"],
        vec!["halfspace", "--phi", "1 + x"],
        vec!["reconstruct"],
    ] {
        let mut args = cmd.clone();
        args.extend(small);
        assert_eq!(cli(&args, &out), EXIT_OK, "{cmd:?}");
    }
    for f in ["adjoint.csv", "ratio.csv", "rho.csv", "g1.csv", "g2.csv", "halfspace.json", "recon_kn0.25.csv", "condition.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let hs: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("halfspace.json")).unwrap()).unwrap();
    let xi = hs["xi"].as_f64().unwrap();
    assert!(xi > 1.0 && xi < 2.0);
}

#[test]
fn paper_figures_are_deterministic_and_round_trip() {
    let a = scratch("figs_a");
    let b = scratch("figs_b");
    let small = ["--nx", "40", "--nv", "8"];
    let mut args = vec!["paper-figures"];
    args.extend(small);
    assert_eq!(cli(&args, &a), EXIT_OK);
    let (h, rows) = read_rows(&a.join("fig1.csv")).unwrap();
    assert_eq!(h.len(), 4);
    assert!(!rows.is_empty());
    let manifest = a.join("manifest.json");
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["config"]["n_x"], 40);
    assert_eq!(m["artifacts"].as_array().unwrap().len(), 6);
    assert_eq!(cli(&["paper-figures", "--config", manifest.to_str().unwrap()], &b), EXIT_OK);
    for i in 1..=6 {
        let f = format!("fig{i}.csv");
        assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{f}");
    }
    let (h4, _) = read_rows(&a.join("fig4.csv")).unwrap();
    assert_eq!(h4, ["kn", "x", "ratio", "predicted"]);
    let (h2, _) = read_rows(&a.join("fig2.csv")).unwrap();
    assert_eq!(h2, ["kn", "x", "v1", "v2", "v3"]);
}

#[test]
fn paper_figures_defaults_have_three_spectra() {
    let out = scratch("figs_full");
    assert_eq!(cli(&["paper-figures"], &out), EXIT_OK);
    let (h, rows) = read_rows(&out.join("fig1.csv")).unwrap();
    assert_eq!(h, ["index", "kn_0.25", "kn_0.125", "kn_0.0625"]);
    assert!(rows.len() >= 20);
    assert!(rows.iter().all(|r| r.len() == 4 && r[1..].iter().all(|v| v.is_finite() && *v >= 0.0)));
}
