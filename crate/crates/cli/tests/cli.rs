use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shared-cacc"))
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn short_scenario(name: &str) -> Value {
    json!({
        "name": name,
        "n_followers": 3,
        "duration": 6.0,
        "leader": {"kind": "constant", "v": 10.0},
        "authority": {"kind": "linear_gradient", "t_start": 1.0, "duration": 2.0},
        "planner": {"horizon": 10}
    })
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn run_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "short", &short_scenario("short"));
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));

    let csv = std::fs::read_to_string(out_dir.join("short_trajectory.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "t,vehicle_id,position_m,speed_mps,accel_mps2,gap_m,dv_mps,u_h,u_m,u_fused,alpha_h,flags"
    );
    // one sample per step (t = 0 to 5.9 s), 4 vehicles each
    assert_eq!(csv.lines().count(), 1 + 60 * 4);

    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("short_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["config"]["n_followers"], 3);
    let outputs: Vec<String> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert_eq!(outputs.len(), 2);
    assert!(outputs.iter().all(|p| Path::new(p).exists()));

    let moe: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("short_moe.json")).unwrap()).unwrap();
    assert_eq!(moe["vehicles"].as_array().unwrap().len(), 3);
    assert_eq!(moe["collision"], false);
}

#[test]
fn manifest_config_reproduces_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "first", &short_scenario("rt"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(
        code(
            &bin()
                .args(["run", "--config"])
                .arg(&cfg)
                .arg("--out-dir")
                .arg(&a)
                .output()
                .unwrap()
        ),
        0
    );

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(a.join("rt_manifest.json")).unwrap()).unwrap();
    let resolved = write_config(dir.path(), "resolved", &manifest["config"]);
    assert_eq!(
        code(
            &bin()
                .args(["run", "--config"])
                .arg(&resolved)
                .arg("--out-dir")
                .arg(&b)
                .output()
                .unwrap()
        ),
        0
    );
    for f in ["rt_trajectory.csv", "rt_moe.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn missing_config_exits_1_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&missing)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(text(&out.stderr).contains("nope.json"));
}

#[test]
fn malformed_field_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = short_scenario("bad");
    v["planner"]["horizon"] = json!("thirty");
    let cfg = write_config(dir.path(), "bad", &v);
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(text(&out.stderr).contains("planner.horizon"), "{}", text(&out.stderr));

    let mut v = short_scenario("typo");
    v["planer"] = json!({});
    let cfg = write_config(dir.path(), "typo", &v);
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(text(&out.stderr).contains("planer"), "{}", text(&out.stderr));
}

#[test]
fn overrides_apply_before_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ov", &short_scenario("ov"));
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path())
        .args([
            "--override",
            "n_followers=2",
            "--override",
            "name=renamed",
            "--seed",
            "7",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("renamed_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["n_followers"], 2);
    assert_eq!(manifest["config"]["seed"], 7);

    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path())
        .args(["--override", "planner.u_min=50"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn collision_exits_2_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let v = json!({
        "name": "crash",
        "n_followers": 2,
        "duration": 6.0,
        "leader": {"kind": "hard_brake", "v0": 10.0, "decel": -8.0, "t_start": 0.0, "v_final": 0.0},
        "planner": {"horizon": 10},
        "accel_limits": {"min": -1.0, "max": 3.0}
    });
    let cfg = write_config(dir.path(), "crash", &v);
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "{}", text(&out.stderr));
    assert!(dir.path().join("crash_trajectory.csv").exists());
    let moe: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("crash_moe.json")).unwrap()).unwrap();
    assert_eq!(moe["collision"], true);
}

#[test]
fn metrics_recomputes_the_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = short_scenario("m");
    v["leader"] =
        json!({"kind": "sinusoid", "v0": 10.0, "amplitude": 1.0, "period": 2.0, "t_start": 0.5, "cycles": 1.0});
    v["authority"] = json!({"kind": "constant", "alpha_h": 0.2});
    v["duration"] = json!(12.0);
    let cfg = write_config(dir.path(), "m", &v);
    assert_eq!(
        code(
            &bin()
                .arg("run")
                .arg("--config")
                .arg(&cfg)
                .arg("--out-dir")
                .arg(dir.path())
                .output()
                .unwrap()
        ),
        0
    );

    let recomputed = dir.path().join("again.json");
    let out = bin()
        .arg("metrics")
        .arg("--csv")
        .arg(dir.path().join("m_trajectory.csv"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&recomputed)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let a: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m_moe.json")).unwrap()).unwrap();
    let b: Value = serde_json::from_str(&std::fs::read_to_string(&recomputed).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweep_single_point_reports_no_threshold_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = short_scenario("sw");
    v["leader"] =
        json!({"kind": "sinusoid", "v0": 10.0, "amplitude": 1.0, "period": 2.0, "t_start": 0.5, "cycles": 4.0});
    v["duration"] = json!(12.0);
    let cfg = write_config(dir.path(), "sw", &v);
    let run = |out: &Path| {
        bin()
            .arg("sweep")
            .arg("--config")
            .arg(&cfg)
            .arg("--out-dir")
            .arg(out)
            .args(["--grid", "0.0"])
            .output()
            .unwrap()
    };
    let a = dir.path().join("a");
    let out = run(&a);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("no threshold in range"));
    let csv = std::fs::read_to_string(a.join("sw_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("alpha_h,theta_2,theta_3,max_theta,stable,collision"));
    let th: Value = serde_json::from_str(&std::fs::read_to_string(a.join("sw_threshold.json")).unwrap()).unwrap();
    assert_eq!(th["threshold"], Value::Null);

    let b = dir.path().join("b");
    assert_eq!(code(&run(&b)), 0);
    for f in ["sw_sweep.csv", "sw_threshold.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn sweep_rejects_unknown_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p", &short_scenario("p"));
    let out = bin()
        .arg("sweep")
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path())
        .args(["--param", "dt"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn out_dir_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "env", &short_scenario("env"));
    let target = dir.path().join("from_env");
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .env("SHARED_CACC_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    assert!(target.join("env_manifest.json").exists());
}

#[test]
fn validate_passes_and_perturbation_breaches() {
    let out = bin()
        .args(["validate", "--suite", "human_law", "--instances", "20"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", text(&out.stdout));
    assert!(text(&out.stdout).contains("human_law"));

    let out = bin()
        .args([
            "validate",
            "--suite",
            "human_law",
            "--instances",
            "20",
            "--perturb-gain",
            "0.5",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
    assert!(text(&out.stdout).contains("reproduce:"));

    let out = bin().args(["validate", "--suite", "nonsense"]).output().unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn validate_is_deterministic_per_seed() {
    let run = |seed: &str| {
        let out = bin()
            .args(["validate", "--suite", "stacked", "--instances", "10", "--seed", seed])
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        text(&out.stdout)
    };
    assert_eq!(run("11"), run("11"));
    assert_ne!(run("11"), run("12"));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let out = bin()
                .arg("run")
                .arg("--config")
                .arg(&path)
                .args(["--override", "duration=0.2", "--out-dir"])
                .arg(tempfile::tempdir().unwrap().path())
                .output()
                .unwrap();
            assert!(matches!(code(&out), 0 | 2), "{}: {}", path.display(), text(&out.stderr));
            n += 1;
        }
    }
    assert!(n >= 7, "expected the shipped case configs, found {n}");
}
