use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios").join(name)
}

fn regulata(args: &[&str]) -> Output {
    regulata_env(args, &[])
}

fn regulata_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_regulata"));
    cmd.args(args).env_remove("REGULATA_TOL");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn pendulum() -> String {
    scenario("pendulum.json").display().to_string()
}

#[test]
fn check_pendulum_passes() {
    let o = regulata(&["check", &pendulum()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("detectable (A, Ce):             no"));

    let o = regulata(&["check", &pendulum(), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["detectable_errors_only"], false);
    assert_eq!(v["stabilizable"], true);
    assert_eq!(v["pathological"], false);
}

#[test]
fn check_fails_with_exit_3_at_a_pathological_period() {
    // ω = 5 and ±5i differ by 10i = 2π/T at T = π/5.
    let t = format!("{}", std::f64::consts::PI / 5.0);
    let o = regulata(&["check", &pendulum(), "--T", &t, "--json"]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["pathological"], true);
}

#[test]
fn missing_file_is_exit_2() {
    let o = regulata(&["simulate", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("file not found"));
}

#[test]
fn malformed_input_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": 3}").unwrap();
    let o = regulata(&["check", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("parse error"));

    let o = regulata(&["design", &pendulum(), "--method", "magic"]);
    assert_eq!(o.status.code(), Some(2));

    let o = regulata(&["sweep", &pendulum(), "--axis", "T", "--values", "0.1,0.05"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("strictly increasing"));

    let o = regulata(&["simulate", &pendulum(), "--method", "multirate", "--init", "steady-state"]);
    assert_eq!(o.status.code(), Some(2));

    let o = regulata_env(&["check", &pendulum()], &[("REGULATA_TOL", "abc")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("REGULATA_TOL"));
}

#[test]
fn design_failure_is_exit_4() {
    // The pathological period makes the hold discretization ill-posed.
    let t = format!("{}", std::f64::consts::PI / 5.0);
    let o = regulata(&["design", &pendulum(), "--method", "hold", "--T", &t]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error: "));
}

#[test]
fn design_hold_emits_certificate_and_residuals() {
    let o = regulata(&["design", &pendulum(), "--method", "hold"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rho = v["certificate"]["spectral_radius"].as_f64().unwrap();
    assert!(rho < 1.0);
    assert_eq!(v["certificate"]["certified"], true);
    for r in v["regulator_equations"]["residuals"].as_array().unwrap() {
        assert!(r.as_f64().unwrap() <= 1e-8);
    }
    let res = v["regulator"]["certificate"]["residuals"].as_object().unwrap();
    assert!(res.values().all(|r| r.as_f64().unwrap() <= 1e-8));
}

#[test]
fn design_multirate_reports_rate_estimate() {
    let o = regulata(&["design", &pendulum(), "--method", "multirate", "--N", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["certificate"]["rate"], 8);
    let est = &v["rate_estimate"];
    for key in ["lambda_cl", "k1", "alpha_star", "phi1", "phi2", "sigma_m", "n_star_raw"] {
        assert!(est[key].as_f64().unwrap() > 0.0, "{key}");
    }
}

#[test]
fn design_emulation_reports_dwell_certificate() {
    let o = regulata(&["design", &pendulum(), "--method", "emulation", "--T", "0.025"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let c = &v["certificate"];
    let (kappa, gamma, tau) = (
        c["kappa"].as_f64().unwrap(),
        c["gamma"].as_f64().unwrap(),
        c["tau_max"].as_f64().unwrap(),
    );
    assert!(kappa > 0.0 && gamma > 0.0 && tau > 0.0);
    // Exit status follows the dwell bound against T.
    let expected = if tau >= 0.025 { 0 } else { 4 };
    assert_eq!(o.status.code(), Some(expected));
}

#[test]
fn simulate_writes_csv_and_svg_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let csv = dir.path().join(format!("{tag}.csv"));
        let svg = dir.path().join(format!("{tag}.svg"));
        let rep = dir.path().join(format!("{tag}.json"));
        let o = regulata(&[
            "simulate",
            &pendulum(),
            "--method",
            "hold",
            "--out",
            csv.to_str().unwrap(),
            "--plot",
            svg.to_str().unwrap(),
            "--log-scale",
            "--report",
            rep.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (
            std::fs::read(csv).unwrap(),
            std::fs::read(svg).unwrap(),
            std::fs::read(rep).unwrap(),
        )
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let csv = String::from_utf8(a.0).unwrap();
    assert!(csv.starts_with("t,j,e_1,ym_1,u_1,norm_e\n"));
    let svg = String::from_utf8(a.1).unwrap();
    assert!(svg.contains(r#"viewBox="0 0 800 500""#));
    assert_eq!(svg.matches("<polyline").count(), 2);
    let rep: serde_json::Value = serde_json::from_slice(&a.2).unwrap();
    assert_eq!(rep["bounded"], true);
    assert!(rep["tail_sup_e"].as_f64().unwrap() <= 1e-6 * rep["peak_e"].as_f64().unwrap());
    assert!(std::fs::read_dir(dir.path())
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn simulate_to_stdout_and_perturbed_runs_depend_on_seed() {
    let base = ["simulate", &pendulum(), "--method", "hold", "--horizon", "2", "--perturb", "0.01"];
    let with_seed = |seed: &str| {
        let mut args = base.to_vec();
        args.extend(["--seed", seed]);
        let o = regulata(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        stdout(&o)
    };
    let a = with_seed("1");
    assert_eq!(a, with_seed("1"));
    assert_ne!(a, with_seed("2"));
    assert!(a.starts_with("t,j,"));
}

#[test]
fn emulation_dichotomy_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.json");
    let csv = dir.path().join("sweep.csv");
    let o = regulata(&[
        "sweep",
        &pendulum(),
        "--axis",
        "T",
        "--values",
        "0.025,0.1",
        "--method",
        "emulation",
        "--out",
        out.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["axis"], "T");
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 2);
    assert_eq!(pts[0]["report"]["bounded"], true);
    assert!(pts[0]["report"]["tail_sup_e"].as_f64().unwrap() > 0.0);
    assert_eq!(pts[1]["report"]["bounded"], false);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn rate_sweep_is_ordered_and_deterministic() {
    let args = ["sweep", &pendulum(), "--axis", "N", "--values", "2,4,8", "--horizon", "5"];
    let a = regulata(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = regulata(&args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stderr, b.stderr);
    let v: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(v["method"], "multirate");
    let rates: Vec<u64> = v["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["certificate"]["rate"].as_u64().unwrap())
        .collect();
    assert_eq!(rates, [2, 4, 8]);

    let o = regulata(&["sweep", &pendulum(), "--axis", "N", "--values", "2", "--method", "hold"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn demo_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo");
    let o = regulata(&["demo", "pendulum", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "scenario.json",
        "check.json",
        "design_hold.json",
        "hold.csv",
        "hold.svg",
        "emulation_T0.025.csv",
        "emulation_T0.1.svg",
        "multirate_N4.csv",
        "summary.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    let by_label = |l: &str| {
        summary
            .as_array()
            .unwrap()
            .iter()
            .find(|e| e["label"] == l)
            .unwrap()["report"]
            .clone()
    };
    assert_eq!(by_label("hold")["bounded"], true);
    assert_eq!(by_label("emulation_T0.025")["bounded"], true);
    assert_eq!(by_label("emulation_T0.1")["bounded"], false);
    // The bundled scenario file round-trips to the same scenario.
    let written = std::fs::read_to_string(out.join("scenario.json")).unwrap();
    assert_eq!(written, std::fs::read_to_string(scenario("pendulum.json")).unwrap());
}

#[test]
fn demo_constant_disturbance() {
    let dir = tempfile::tempdir().unwrap();
    let o = regulata(&["demo", "pendulum-constant", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    for e in summary.as_array().unwrap() {
        assert!(e["report"]["terminal_e"].as_f64().unwrap() <= 1e-8, "{}", e["label"]);
    }
}
