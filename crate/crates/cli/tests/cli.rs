use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sloc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sloc"))
        .args(args)
        .current_dir(dir)
        .env_remove("SLOC_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn lsi_table_has_gamma_one_and_bound() {
    let tmp = TempDir::new().unwrap();
    let o = sloc(&["lsi", "--out", "run", "--paths", "1000", "--format", "csv"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let table = fs::read_to_string(tmp.path().join("run/schedule.csv")).unwrap();
    assert!(table.starts_with("tau,lambda,Lambda,gamma,factor\n"));
    assert!(table.ends_with("1,0,0,1,0\n"), "{table}");
    let bounds: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("run/bounds.json")).unwrap()).unwrap();
    assert_eq!(bounds["lsi_lower_bound"], 0.5);
    assert!(tmp.path().join("run/report.csv").exists());
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let tmp = TempDir::new().unwrap();
    let run = |out: &str, seed: &str, workers: &str| {
        let o = sloc(&["simulate", "--out", out, "--seed", seed, "--paths", "200", "--dt", "0.01", "--workers", workers], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (
            fs::read(tmp.path().join(out).join("terminal.csv")).unwrap(),
            fs::read(tmp.path().join(out).join("trajectories.csv")).unwrap(),
        )
    };
    let a = run("a", "7", "1");
    let b = run("b", "7", "4");
    let c = run("c", "8", "2");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
    let terminal = String::from_utf8(a.0).unwrap();
    assert!(terminal.starts_with("stream_id,time,x_1\n0,1,"));
    assert_eq!(terminal.lines().count(), 201);
    let traj = String::from_utf8(a.1).unwrap();
    assert!(traj.starts_with("stream_id,t,c_1,m_1\n"));
    assert_eq!(traj.lines().count(), 1 + 10 * 101);
}

#[test]
fn simulate_other_perspectives() {
    let tmp = TempDir::new().unwrap();
    for (p, header) in [
        ("channel", "stream_id,time,x_1,x_2\n"),
        ("diffusion", "stream_id,u,x_1,x_2,c_1,c_2\n"),
        ("polchinski", "stream_id,time,x_1,x_2\n"),
        ("follmer", "stream_id,time,x_1,x_2\n"),
    ] {
        let cfg = write(
            tmp.path(),
            &format!("{p}.json"),
            &format!(r#"{{"perspective":"{p}","target":{{"kind":"mixture","components":[{{"weight":0.5,"mean":[-1,0],"cov":[[1,0],[0,1]]}},{{"weight":0.5,"mean":[1,0],"cov":[1,0,0,1]}}]}},"paths":20,"trajectories":2,"dt":0.05,"u_max":10,"out":"{p}"}}"#),
        );
        let o = sloc(&["simulate", "--config", &cfg], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{p}: {}", stderr(&o));
        let traj = fs::read_to_string(tmp.path().join(p).join("trajectories.csv")).unwrap();
        assert!(traj.starts_with(header), "{p}: {traj}");
    }
}

#[test]
fn config_errors_exit_two_and_name_fields() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.json", r#"{"dt": -0.1, "paths": 0}"#);
    let o = sloc(&["equiv", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("dt must be positive") && err.contains("paths must be at least 1"), "{err}");

    let cfg = write(tmp.path(), "pot.json", r#"{"perspective":"diffusion","target":{"kind":"potential-ref","name":"quartic","dim":1}}"#);
    assert_eq!(sloc(&["equiv", "--config", &cfg], tmp.path()).status.code(), Some(2));
    let cfg = write(tmp.path(), "broken.json", "{");
    assert_eq!(sloc(&["equiv", "--config", &cfg], tmp.path()).status.code(), Some(2));
    assert_eq!(sloc(&["equiv", "--format", "xml"], tmp.path()).status.code(), Some(2));
}

#[test]
fn unknown_keys_only_warn() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"foo": 1, "paths": 10, "dt": 0.1}"#);
    let o = sloc(&["simulate", "--config", &cfg, "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("unknown key \"foo\""));
}

#[test]
fn seed_falls_back_to_environment() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sloc"))
        .args(["simulate", "--paths", "5", "--dt", "0.1", "--out", "o"])
        .current_dir(tmp.path())
        .env("SLOC_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("o/config.json")).unwrap()).unwrap();
    assert_eq!(cfg["seed"], 99);
}

#[test]
fn equiv_passes_on_a_standard_gaussian() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"target":{"kind":"gaussian","mean":[0],"cov":[[1]]},"particles":300,"particle_runs":200,"out":"eq"}"#);
    let o = sloc(&["equiv", "--config", &cfg, "--seed", "42", "--paths", "3000"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("eq/report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert!(report["checks"].as_array().unwrap().len() > 10);
}

#[test]
fn rgd_and_bridge_write_their_artifacts() {
    let tmp = TempDir::new().unwrap();
    let o = sloc(&["rgd", "--out", "r", "--paths", "2000"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let chain = fs::read_to_string(tmp.path().join("r/chain.csv")).unwrap();
    assert!(chain.starts_with("iteration,x_1,kl\n0,"));
    assert_eq!(chain.lines().count(), 22);
    assert!(tmp.path().join("r/stability.json").exists());

    let o = sloc(&["bridge", "--out", "b", "--paths", "2000"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(fs::read_to_string(tmp.path().join("b/coupling.csv")).unwrap().lines().count(), 8);
    let trace: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("b/sinkhorn_trace.json")).unwrap()).unwrap();
    assert_eq!(trace[0]["iteration"], 1);
}

#[test]
fn report_aggregates_and_propagates_failure() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(sloc(&["lsi", "--out", "l", "--paths", "500"], tmp.path()).status.code(), Some(0));
    let o = sloc(&["report", "l", "--out", "sum", "--format", "csv"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("sum/summary.json").exists());
    assert!(fs::read_to_string(tmp.path().join("sum/summary.csv")).unwrap().starts_with("command,name,observed,tolerance,relation,pass\n"));

    let failing = write(
        tmp.path(),
        "f.json",
        r#"{"command":"x","seed":0,"pass":false,"checks":[{"name":"c","observed":2.0,"tolerance":1.0,"relation":"at_most","pass":false,"runtime_s":0.0}]}"#,
    );
    let o = sloc(&["report", "l", &failing], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL c:"));
}
