use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const EXAMPLE_MODEL: &str = r#"d = 2
eps = [0.0, 0.0, 0.0, 0.0]
c_re = [[0.5, 0.0, 0.0, 0.0], [0.0, 0.5, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]]
c_im = [[0.0, -0.5, 0.0, 0.0], [0.5, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]]
"#;

fn mfdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfdyn")).args(args).output().expect("run mfdyn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_config(dir: &Path, omega0: &str, extra: &str) -> PathBuf {
    write(dir, "model.toml", EXAMPLE_MODEL);
    let text = format!(
        "model = \"model.toml\"\nomega0 = {omega0}\nt_end = 2.0\ngrid = 21\nt_oracle = 0.5\nn_list = [2, 3, 4]\n{extra}\n[output]\ndir = \"out\"\n"
    );
    write(dir, "run.toml", &text)
}

const OMEGA0: &str = "[0.4242640687119285, 0.0, 0.5656854249492381, 0.7071067811865475]";

#[test]
fn validate_accepts_the_example() {
    let tmp = TempDir::new().unwrap();
    let cfg = run_config(tmp.path(), OMEGA0, "");
    let o = mfdyn(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("validation passed"));
    let o = mfdyn(&["validate", "--config", tmp.path().join("model.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
}

#[test]
fn validate_rejects_bad_models() {
    let tmp = TempDir::new().unwrap();
    let bad_c = write(tmp.path(), "bad_c.toml", "d = 2\neps = [0.0, 0.0, 0.0, 0.0]\nc_re = [[1.0, 0.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]]\n");
    let o = mfdyn(&["validate", "--config", bad_c.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let bad_h = write(tmp.path(), "bad_h.toml", "d = 2\neps = [0.0, 0.0, 0.0, 0.0]\nh_re = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]\n");
    let o = mfdyn(&["validate", "--config", bad_h.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let bad_d = write(tmp.path(), "bad_d.toml", "d = 2\neps = [0.0, 0.0, 0.0]\n");
    assert_eq!(code(&mfdyn(&["validate", "--config", bad_d.to_str().unwrap()])), 1);
    let garbage = write(tmp.path(), "garbage.toml", "d = [\n");
    assert_eq!(code(&mfdyn(&["validate", "--config", garbage.to_str().unwrap()])), 1);
    let missing = tmp.path().join("nope.toml");
    assert_eq!(code(&mfdyn(&["validate", "--config", missing.to_str().unwrap()])), 3);
}

#[test]
fn macro_run_matches_golden_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = run_config(tmp.path(), OMEGA0, "");
    let out = tmp.path().join("out");
    let o = mfdyn(&["run", "--config", cfg.to_str().unwrap(), "--stages", "macro,example"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let macro_csv = out.join("macro.csv");
    let golden = out.join("golden.csv");
    assert!(out.join("summary.json").exists());
    let o = mfdyn(&["compare", macro_csv.to_str().unwrap(), golden.to_str().unwrap(), "--common", "--tolerance", "1e-8"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));

    let first = fs::read(&macro_csv).unwrap();
    let o = mfdyn(&["run", "--config", cfg.to_str().unwrap(), "--stages", "macro"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(&macro_csv).unwrap(), first);

    let o = mfdyn(&["compare", macro_csv.to_str().unwrap(), macro_csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("max defect: 0.0"));
}

#[test]
fn every_stage_runs_in_json() {
    let tmp = TempDir::new().unwrap();
    let cfg = run_config(tmp.path(), OMEGA0, "support = 2");
    let out = tmp.path().join("json");
    let o = mfdyn(&[
        "run", "--config", cfg.to_str().unwrap(), "--stages", "all", "--format", "json",
        "--out", out.to_str().unwrap(), "--workers", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["macro.json", "quasilocal.json", "flow.json", "hybrid.json", "hybrid_blocks.json", "sweep.json", "sweep_fit.json", "oracle_N4.json", "golden.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    for stage in ["macro", "quasilocal", "meso", "hybrid", "oracle", "example"] {
        assert!(summary.get(stage).is_some(), "{stage}");
    }
    let o = mfdyn(&["compare", out.join("macro.json").to_str().unwrap(), out.join("golden.json").to_str().unwrap(), "--common"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn hybrid_stage_on_a_stationary_state() {
    let tmp = TempDir::new().unwrap();
    let cfg = run_config(tmp.path(), "[0.0, 0.0, 0.4242640687119285, 0.7071067811865475]", "");
    let o = mfdyn(&["run", "--config", cfg.to_str().unwrap(), "--stages", "hybrid"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(tmp.path().join("out/hybrid.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|c| *c == "k11_min_eig").unwrap();
    let mut rows = 0;
    for line in lines {
        let v: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
        assert!(v >= -1e-10, "{v}");
        rows += 1;
    }
    assert_eq!(rows, 21);
}

#[test]
fn compare_reports_schema_and_io_problems() {
    let tmp = TempDir::new().unwrap();
    let a = write(tmp.path(), "a.csv", "t,x\n0.0,1.0\n1.0,2.0\n");
    let b = write(tmp.path(), "b.csv", "t,y\n0.0,1.0\n1.0,2.0\n");
    let c = write(tmp.path(), "c.csv", "t,x\n0.0,1.0\n1.0,2.5\n");
    assert_eq!(code(&mfdyn(&["compare", a.to_str().unwrap(), b.to_str().unwrap()])), 1);
    let o = mfdyn(&["compare", a.to_str().unwrap(), c.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL"));
    assert_eq!(code(&mfdyn(&["compare", a.to_str().unwrap(), c.to_str().unwrap(), "--informational"])), 0);
    assert_eq!(code(&mfdyn(&["compare", a.to_str().unwrap(), c.to_str().unwrap(), "--tolerance", "0.6"])), 0);
    let missing = tmp.path().join("missing.csv");
    assert_eq!(code(&mfdyn(&["compare", a.to_str().unwrap(), missing.to_str().unwrap()])), 3);
}

#[test]
fn run_rejects_bad_options() {
    let tmp = TempDir::new().unwrap();
    let cfg = run_config(tmp.path(), OMEGA0, "");
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&mfdyn(&["run", "--config", c, "--stages", "nonsense"])), 1);
    assert_eq!(code(&mfdyn(&["run", "--config", c, "--format", "xml"])), 1);
    assert_eq!(code(&mfdyn(&["run", "--config", c, "--tol-ode=-1"])), 1);
    let outside = run_config(tmp.path(), "[0.9, 0.0, 0.0, 0.7071067811865475]", "");
    assert_eq!(code(&mfdyn(&["run", "--config", outside.to_str().unwrap()])), 1);
}

#[test]
fn inline_model_and_tolerance_overrides() {
    let tmp = TempDir::new().unwrap();
    let text = format!(
        "omega0 = {OMEGA0}\nt_end = 1.0\ngrid = 11\n\n[model]\n{EXAMPLE_MODEL}\n[output]\ndir = \"inline\"\nformat = \"json\"\n"
    );
    let cfg = write(tmp.path(), "inline.toml", &text);
    let o = mfdyn(&["run", "--config", cfg.to_str().unwrap(), "--tol-ode", "1e-11", "--tol-rank", "1e-10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("inline/macro.json").exists());
}

#[test]
fn usage_errors_are_validation_failures() {
    assert_eq!(code(&mfdyn(&["frobnicate"])), 1);
    assert_eq!(code(&mfdyn(&["run"])), 1);
    assert_eq!(code(&mfdyn(&["--help"])), 0);
}
