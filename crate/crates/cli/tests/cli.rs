use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::tempdir;

fn curveflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curveflow"))
        .args(args)
        .current_dir(dir)
        .env_remove("CURVEFLOW_THREADS")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn entries(dir: &Path) -> usize {
    fs::read_dir(dir).unwrap().count()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn selftest_passes_and_is_byte_identical() {
    let dir = tempdir().unwrap();
    let a = curveflow(dir.path(), &["selftest", "--out", "a.json"]);
    let b = curveflow(dir.path(), &["selftest", "--out", "b.json"]);
    assert_eq!((code(&a), code(&b)), (0, 0), "{}", String::from_utf8_lossy(&a.stderr));
    let (ra, rb) = (fs::read(dir.path().join("a.json")).unwrap(), fs::read(dir.path().join("b.json")).unwrap());
    // The config echo names the output file, so compare the report bodies.
    let (va, vb): (Value, Value) = (serde_json::from_slice(&ra).unwrap(), serde_json::from_slice(&rb).unwrap());
    assert_eq!(va["report"], vb["report"]);
    assert_eq!(va["pass"], Value::Bool(true));
    assert!(dir.path().join("schema.json").exists());
    let c = curveflow(dir.path(), &["selftest", "--out", "a.json"]);
    assert_eq!(code(&c), 0);
    assert_eq!(fs::read(dir.path().join("a.json")).unwrap(), ra);
}

#[test]
fn usage_errors_exit_2_and_write_nothing() {
    let dir = tempdir().unwrap();
    for args in [
        &["flow", "run", "--bogus"][..],
        &["frobnicate"],
        &["ode", "sweep", "--mode", "ricci", "--eps0", "0.5", "--out", "r.json"],
        &["ode", "sweep", "--mode", "sideways", "--eps0", "1e-3", "--out", "r.json"],
        &["flow", "run", "--initial", "torus:1", "--t-end", "0.1", "--out", "tr"],
        &["flow", "run", "--initial", "sphere:1", "--t-end", "0.1", "--monitor", "1:2", "--out", "tr"],
        &["flow", "monitor", "--trace", "missing", "--out", "m.json"],
        &["gh", "converge", "--radial", "0", "--out", "g.json"],
    ] {
        let out = curveflow(dir.path(), args);
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert_eq!(code(&out), 2, "{args:?}: {stderr}");
        assert!(stderr.contains("\"snapshot_csv\""), "{args:?}: schema not printed");
        assert_eq!(entries(dir.path()), 0, "{args:?} left files behind");
    }
}

#[test]
fn thread_cap_is_validated_and_does_not_change_results() {
    let dir = tempdir().unwrap();
    let run = |threads: Option<&str>, out: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_curveflow"));
        cmd.args(["compare", "jacobi", "--samples", "200", "--seed", "9", "--out", out]).current_dir(dir.path());
        match threads {
            Some(t) => cmd.env("CURVEFLOW_THREADS", t),
            None => cmd.env_remove("CURVEFLOW_THREADS"),
        };
        cmd.output().unwrap()
    };
    assert_eq!(code(&run(Some("1"), "one.json")), 0);
    assert_eq!(code(&run(None, "many.json")), 0);
    assert_eq!(json(&dir.path().join("one.json"))["report"], json(&dir.path().join("many.json"))["report"]);
    assert_eq!(code(&run(Some("0"), "bad.json")), 2);
    assert!(!dir.path().join("bad.json").exists());
}

#[test]
fn flow_run_then_monitor() {
    let dir = tempdir().unwrap();
    let out = curveflow(
        dir.path(),
        &["flow", "run", "--initial", "sphere:1", "--t-end", "0.1", "--nodes", "100", "--snapshots", "0,0.05,0.1", "--monitor", "0:0:3.141592653589793", "--out", "tr"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let tr = dir.path().join("tr");
    let trace = json(&tr.join("trace.json"));
    assert_eq!(trace["times"].as_array().unwrap().len(), 3);
    assert_eq!(trace["version"], env!("CARGO_PKG_VERSION"));
    assert!(tr.join("schema.json").exists());
    let csv = fs::read_to_string(tr.join("snapshot_002.csv")).unwrap();
    assert!(csv.starts_with("s,w,phi,k_rad,k_sph,ric_min,scalar_r\n"));
    // r(0.1)² = 0.6 on the round sphere, so k = 1/0.6 at the tip.
    let tip: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((tip[3] - 1.0 / 0.6).abs() < 1e-3, "{tip:?}");
    assert!((tip[6] - 6.0 / 0.6).abs() < 1e-2);

    let out = curveflow(dir.path(), &["flow", "monitor", "--trace", "tr", "--out", "mon.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mon = json(&dir.path().join("mon.json"));
    assert_eq!(mon["command"], "flow monitor");
    assert_eq!(mon["config"]["eps0"], 1e-3);
    let c0 = mon["report"]["smoothing"]["c0"].as_f64().unwrap();
    assert!((c0 - 0.1 / 0.6).abs() < 1e-3, "{c0}");

    // A second run replaces the directory; no temporary siblings remain.
    let out = curveflow(dir.path(), &["flow", "run", "--initial", "sphere:1", "--t-end", "0.05", "--nodes", "100", "--out", "tr"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&tr.join("trace.json"))["times"].as_array().unwrap().len(), 5);
    let names: Vec<String> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert!(names.iter().all(|n| !n.starts_with('.')), "{names:?}");
}

#[test]
fn ode_sweeps_are_seeded() {
    let dir = tempdir().unwrap();
    for mode in ["ricci", "sectional", "n11"] {
        let args = |out: &'static str| ["ode", "sweep", "--mode", mode, "--eps0", "1e-3", "--samples", "3000", "--seed", "5", "--out", out];
        assert_eq!(code(&curveflow(dir.path(), &args("x.json"))), 0);
        assert_eq!(code(&curveflow(dir.path(), &args("y.json"))), 0);
        let (x, y) = (json(&dir.path().join("x.json")), json(&dir.path().join("y.json")));
        assert_eq!(x["report"], y["report"]);
        assert_eq!(x["report"]["seed"], 5);
    }
}

#[test]
fn tame_build_keeps_the_ball() {
    let dir = tempdir().unwrap();
    let out = curveflow(dir.path(), &["tame", "build", "--base", "euclidean", "--nodes", "2001", "--s-max", "5", "--index", "2", "--out", "t.csv"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = curveflow::profiles::load_csv(&dir.path().join("t.csv")).unwrap();
    for (s, w) in m.s().iter().zip(m.w()).take_while(|(s, _)| **s <= 2.0) {
        assert_eq!(s, w);
    }
    assert!(m.s_max() > 5.0);
}

#[test]
fn gh_converge_on_the_flat_cone() {
    let dir = tempdir().unwrap();
    let out = curveflow(dir.path(), &["gh", "converge", "--c", "1", "--scales", "1,4", "--radial", "3", "--angular", "4", "--out", "g.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let g = json(&dir.path().join("g.json"));
    let upper = g["report"]["upper"].as_array().unwrap();
    assert!(upper.iter().all(|u| u.as_f64().unwrap() <= 2e-3));
}
