use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use udot::output::{decode_snapshot, SNAPSHOT_COUNT};

fn instance(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("instances").join(name)
}

fn udot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_udot")).args(args).output().expect("spawn udot")
}

fn solve(name: &str, out: &Path) -> Output {
    udot(&["solve", instance(name).to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"])
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap()
}

fn num(v: &serde_json::Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("{key} missing"))
}

#[test]
fn identity_instance_converges_and_writes_everything() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = solve("identity.toml", &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["termination"], "converged");
    assert!(num(&r, "gap") <= 1e-3);
    for key in ["dual_value", "primal_cost", "iterations", "hjb_residual", "continuity_residual"] {
        assert!(r[key].is_number(), "{key}");
    }

    let (p, d) = (num(&r, "primal_cost"), num(&r, "dual_value"));
    assert!((num(&r, "gap") - (p - d).abs() / d.abs().max(1.0)).abs() <= 1e-15);

    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + r["iterations"].as_u64().unwrap() as usize);

    let m0 = num(&r, "mass0");
    let tol = num(&r, "feas_residual") * m0.max(1.0);
    let ws: Vec<f64> = (0..=32).map(|i| if i == 0 || i == 32 { 0.5 / 32.0 } else { 1.0 / 32.0 }).collect();
    for k in 0..SNAPSHOT_COUNT {
        let bytes = std::fs::read(out.join(format!("mu_t{k}.f64"))).unwrap();
        assert_eq!(&bytes[..32], b"UDOT 1 32 32                   \n");
        let (d, n_t, n_x, vals) = decode_snapshot(&bytes).unwrap();
        assert_eq!((d, n_t, n_x), (1, 32, vec![32]));
        let mass: f64 = vals.iter().zip(&ws).map(|(v, w)| v * w).sum();
        assert!((mass - m0).abs() <= tol, "snapshot {k}: mass {mass} vs {m0}");
    }
    let leftovers: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn growth_instance_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = solve("growth.toml", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    assert!((num(&r, "primal_cost") - 2.0).abs() <= 0.02 * 2.0);
    let masses: Vec<f64> = r["snapshot_masses"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (k, m) in masses.iter().enumerate() {
        let t = k as f64 / 10.0;
        assert!((m - (1.0 + t).powi(2)).abs() < 1e-2, "t = {t}: {m}");
    }
}

#[test]
fn balanced_mass_mismatch_is_rejected_before_iterating() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = solve("mass_mismatch.toml", &out);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("masses differ"), "{err}");
    assert_eq!(err.lines().count(), 1);
    assert!(!out.exists());
}

#[test]
fn speed_limited_instance_is_likely_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let o = solve("slow_box.toml", dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(report(dir.path())["termination"], "likely_infeasible");
}

#[test]
fn iteration_cap_gives_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = udot(&[
        "solve",
        instance("growth.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--max-iters",
        "5",
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(report(dir.path())["iterations"], 5);
}

#[test]
fn parse_errors_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[grid]\nd = 1\nn_t = = 4\n").unwrap();
    let o = udot(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:3:"), "{err}");

    let o = udot(&["solve", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let o = udot(&["solve", instance("identity.toml").to_str().unwrap(), "--out", "x", "--r", "-1"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn check_prints_feasibility_warnings() {
    let o = udot(&["check", instance("slow_box.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("warning: supports are"), "{text}");
    let o = udot(&["check", instance("growth.toml").to_str().unwrap()]);
    assert!(!String::from_utf8_lossy(&o.stdout).contains("warning"));
}

fn oracle_cost(args: &[&str]) -> f64 {
    let o = udot(args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    v.get("cost").or_else(|| v.get("objective")).and_then(|c| c.as_f64()).unwrap()
}

#[test]
fn oracle_subcommands() {
    let growth = oracle_cost(&["oracle", "dirac", "--x0", "0.5", "--m0", "1", "--x1", "0.5", "--m1", "4"]);
    assert!((growth - 2.0).abs() < 2e-3);
    let shift = oracle_cost(&[
        "oracle", "dirac", "--x0", "0.2", "--m0", "1", "--x1", "0.5", "--m1", "1", "--variant", "balanced",
    ]);
    assert!((shift - 0.045).abs() < 1e-9);
    let q = oracle_cost(&["oracle", "quantile", "--x0", "0,1", "--m0", "0.5,0.5", "--x1", "0.5,1.5", "--m1", "0.5,0.5"]);
    assert!((q - 0.125).abs() < 1e-15);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lp.toml");
    std::fs::write(
        &path,
        "[grid]\nd = 1\nn_t = 2\nn_x = 4\n[hamiltonian]\nvariant = \"balanced\"\n\
         [measures]\nmu0 = [{ kind = \"inline\", values = [1.0, 0.0, 0.0, 0.0, 0.0] }]\n\
         mu1 = [{ kind = \"inline\", values = [0.0, 0.0, 1.0, 0.0, 0.0] }]\n",
    )
    .unwrap();
    let lp = oracle_cost(&["oracle", "lp", path.to_str().unwrap(), "--v-max", "0.5", "--nw", "1"]);
    assert!((lp - 0.125).abs() < 1e-12, "{lp}");
}
