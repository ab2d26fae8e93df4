//! End-to-end checks of the `csqf` binary: exit codes, artifact layout,
//! generator round-trips, and the tamper/fault paths.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_csqf");

fn csqf(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// A small deterministic experiment: random 6-node net, two algorithms,
/// two derived seeds.
fn small_spec(dir: &Path) -> PathBuf {
    let path = dir.join("spec.json");
    std::fs::write(
        &path,
        r#"{
  "topology": {"er": {"nodes": 6, "links": 8}},
  "traffic": {"profile": {"flow_count": 40}},
  "config": {
    "t_cycle_us": 125, "queue_len": 10, "queue_num": 3,
    "bandwidth_bps": 1000000000, "mtu_bytes": 1522
  },
  "algorithms": ["naive", "focs"],
  "repetitions": 2,
  "master_seed": 7
}
"#,
    )
    .unwrap();
    path
}

fn run_small(dir: &TempDir) -> PathBuf {
    let spec = small_spec(dir.path());
    let out_dir = dir.path().join("out");
    let out = csqf(&["run", "--spec", spec.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    out_dir
}

#[test]
fn run_writes_the_documented_layout() {
    let dir = TempDir::new().unwrap();
    let out_dir = run_small(&dir);

    for name in ["experiment.json", "topology.json", "config.json", "aggregate.csv"] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    let runs: Vec<_> = std::fs::read_dir(out_dir.join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 4, "2 algorithms × 2 seeds");
    let flows: Vec<_> = std::fs::read_dir(out_dir.join("flows")).unwrap().collect();
    assert_eq!(flows.len(), 2, "one flow draw per seed");

    let csv = std::fs::read_to_string(out_dir.join("aggregate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "algorithm,seed,flow_count,scheduled_count,scheduled_pct,total_runtime_ms,\
         p50_per_flow_us,p90_per_flow_us,max_per_flow_us,verifier_violations"
            .replace(' ', "")
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn run_reports_each_cell_on_stdout() {
    let dir = TempDir::new().unwrap();
    let spec = small_spec(dir.path());
    let out_dir = dir.path().join("out");
    let out = csqf(&["run", "--spec", spec.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    let text = stdout(&out);
    assert_eq!(text.matches(" scheduled ").count(), 4, "one line per run:\n{text}");
    assert!(text.contains("naive n=40"));
    assert!(text.contains("focs n=40"));
    assert!(text.lines().last().unwrap().starts_with("wrote "));
}

#[test]
fn verify_accepts_fresh_artifacts_and_rejects_tampering() {
    let dir = TempDir::new().unwrap();
    let out_dir = run_small(&dir);
    let seed_tag = std::fs::read_dir(out_dir.join("flows"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .file_name()
        .into_string()
        .unwrap();
    let schedule = out_dir.join("runs").join(format!("focs-{seed_tag}"));
    let flows = out_dir.join("flows").join(&seed_tag);
    let topo = out_dir.join("topology.json");
    let config = out_dir.join("config.json");
    let args = |sched: &Path| {
        vec![
            "verify".to_owned(),
            "--schedule".into(),
            sched.display().to_string(),
            "--topo".into(),
            topo.display().to_string(),
            "--config".into(),
            config.display().to_string(),
            "--flows".into(),
            flows.display().to_string(),
        ]
    };

    let clean = Command::new(BIN).args(args(&schedule)).output().unwrap();
    assert_eq!(code(&clean), 0, "stderr: {}", stderr(&clean));
    assert!(stdout(&clean).starts_with("clean: "), "got: {}", stdout(&clean));

    // Shift one flow's first queue tag and the replay must notice.
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&schedule).unwrap()).unwrap();
    let entry = doc
        .as_array_mut()
        .unwrap()
        .iter_mut()
        .find(|e| e["scheduled"] == true)
        .expect("at least one scheduled flow");
    let tag = entry["sid_tags"][0].as_u64().unwrap();
    entry["sid_tags"][0] = ((tag + 1) % 3).into();
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, serde_json::to_string(&doc).unwrap()).unwrap();

    let bad = Command::new(BIN).args(args(&tampered)).output().unwrap();
    assert_eq!(code(&bad), 3);
    assert!(stderr(&bad).contains("violation"), "stderr: {}", stderr(&bad));
}

#[test]
fn fault_injection_fails_verification() {
    let dir = TempDir::new().unwrap();
    let spec = small_spec(dir.path());
    let out_dir = dir.path().join("out");
    let out = csqf(&[
        "run",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--inject-fault",
    ]);
    assert_eq!(code(&out), 3);
    assert!(
        stderr(&out).contains("replay verification failed"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn bad_inputs_exit_two() {
    let dir = TempDir::new().unwrap();
    let out_str = dir.path().join("out");
    let out_arg = out_str.to_str().unwrap();

    // Missing spec file.
    let missing = csqf(&["run", "--spec", "/nonexistent/spec.json", "--out", out_arg]);
    assert_eq!(code(&missing), 2);
    assert!(stderr(&missing).starts_with("error: "), "stderr: {}", stderr(&missing));

    // Unparseable spec.
    let garbled = dir.path().join("garbled.json");
    std::fs::write(&garbled, "{not json").unwrap();
    let bad_json = csqf(&["run", "--spec", garbled.to_str().unwrap(), "--out", out_arg]);
    assert_eq!(code(&bad_json), 2);

    // Neither --spec nor --preset.
    let neither = csqf(&["run", "--out", out_arg]);
    assert_eq!(code(&neither), 2);

    // Unknown preset name.
    let preset = csqf(&["run", "--preset", "nope", "--out", out_arg]);
    assert_eq!(code(&preset), 2);
    assert!(stderr(&preset).contains("unknown preset"));

    // Clap-level usage error (unknown algorithm) also lands on 2.
    let spec = small_spec(dir.path());
    let usage =
        csqf(&["run", "--spec", spec.to_str().unwrap(), "--out", out_arg, "--algo", "bogus"]);
    assert_eq!(code(&usage), 2);

    // Verify with a missing input file.
    let verify = csqf(&[
        "verify",
        "--schedule",
        "/nonexistent/a.json",
        "--topo",
        "/nonexistent/b.json",
        "--config",
        "/nonexistent/c.json",
        "--flows",
        "/nonexistent/d.json",
    ]);
    assert_eq!(code(&verify), 2);
}

#[test]
fn generators_round_trip_into_a_run() {
    let dir = TempDir::new().unwrap();
    let topo = dir.path().join("topo.json");
    let flows = dir.path().join("flows.json");

    let gen_topo = csqf(&[
        "gen", "topo", "--er", "--nodes", "6", "--links", "8", "--seed", "3", "--out",
        topo.to_str().unwrap(),
    ]);
    assert_eq!(code(&gen_topo), 0, "stderr: {}", stderr(&gen_topo));
    assert!(stdout(&gen_topo).contains("(6 nodes, 16 edges)"), "got: {}", stdout(&gen_topo));

    let gen_flows = csqf(&[
        "gen", "flows", "--topo", topo.to_str().unwrap(), "--count", "25", "--seed", "9",
        "--out", flows.to_str().unwrap(),
    ]);
    assert_eq!(code(&gen_flows), 0, "stderr: {}", stderr(&gen_flows));
    let entries: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&flows).unwrap()).unwrap();
    assert_eq!(entries.as_array().unwrap().len(), 25);

    // Both files feed back through an experiment spec.
    let spec = dir.path().join("file_spec.json");
    std::fs::write(
        &spec,
        format!(
            r#"{{
  "topology": {{"file": {topo:?}}},
  "traffic": {{"file": {flows:?}}},
  "config": {{
    "t_cycle_us": 125, "queue_len": 10, "queue_num": 3,
    "bandwidth_bps": 1000000000, "mtu_bytes": 1522
  }},
  "algorithms": ["focs"],
  "master_seed": 1
}}
"#
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let run = csqf(&["run", "--spec", spec.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "stderr: {}", stderr(&run));
    assert!(stdout(&run).contains("focs n=25"));
}

#[test]
fn embedded_backbone_generator() {
    let dir = TempDir::new().unwrap();
    let topo = dir.path().join("i2.json");
    let out = csqf(&["gen", "topo", "--internet2", "--out", topo.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("(8 nodes, 18 edges)"), "got: {}", stdout(&out));
    // --internet2 and --er are mutually exclusive at the parser level.
    let both = csqf(&[
        "gen", "topo", "--internet2", "--er", "--nodes", "6", "--links", "8", "--out",
        topo.to_str().unwrap(),
    ]);
    assert_eq!(code(&both), 2);
}

#[test]
fn preset_run_with_overrides() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = csqf(&[
        "run", "--preset", "desk", "--out", out_dir.to_str().unwrap(), "--algo", "naive",
        "--levels", "50",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.matches("naive n=50").count(), 3, "three desk seeds:\n{text}");
}

#[test]
fn plot_reduces_an_aggregate() {
    let dir = TempDir::new().unwrap();
    let out_dir = run_small(&dir);
    let agg = out_dir.join("aggregate.csv");
    let plots = dir.path().join("plots");
    let out = csqf(&[
        "plot",
        "--aggregate",
        &format!("base={}", agg.display()),
        "--out",
        plots.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for name in
        ["scheduled_bars.csv", "exec_time_cdf.csv", "queue_comparison.csv", "alloc_comparison.csv"]
    {
        assert!(plots.join(name).is_file(), "missing {name}");
    }
    let bars = std::fs::read_to_string(plots.join("scheduled_bars.csv")).unwrap();
    assert!(bars.contains("base/naive"), "labeled series expected:\n{bars}");
    assert!(bars.contains("base/focs"));

    // An aggregate that is not our CSV is a usage error.
    let bogus = dir.path().join("bogus.csv");
    std::fs::write(&bogus, "a,b\n1,2\n").unwrap();
    let bad = csqf(&["plot", "--aggregate", bogus.to_str().unwrap(), "--out",
        plots.to_str().unwrap()]);
    assert_eq!(code(&bad), 2);
}
