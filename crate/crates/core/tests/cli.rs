mod common;

use corrslam::csm::packet::{from_bytes, to_bytes};
use corrslam::csm::{Algorithm, CsmEngine};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn corrslam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrslam")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = corrslam(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate_corridor(dir: &Path) {
    ok(&["simulate", "--scene", "corridor", "--seed", "3", "--out", p(dir)]);
}

#[test]
fn simulate_writes_log_truth_and_relations() {
    let dir = tempfile::tempdir().unwrap();
    simulate_corridor(dir.path());
    let log = fs::read_to_string(dir.path().join("log.carmen")).unwrap();
    assert_eq!(log.lines().filter(|l| l.starts_with("FLASER")).count(), 60);
    assert_eq!(fs::read_to_string(dir.path().join("ground_truth.txt")).unwrap().lines().count(), 60);
    assert!(fs::read_to_string(dir.path().join("relations.txt")).unwrap().lines().count() > 60);
}

#[test]
fn eval_of_ground_truth_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    simulate_corridor(dir.path());
    let report = dir.path().join("report.txt");
    let stdout = ok(&[
        "eval",
        "--trajectory",
        p(&dir.path().join("ground_truth.txt")),
        "--relations",
        p(&dir.path().join("relations.txt")),
        "--out",
        p(&report),
    ]);
    assert!(stdout.contains("eps_trans="), "{stdout}");
    let line = stdout.lines().find(|l| l.starts_with("eps_trans=")).unwrap();
    let value: f64 = line.trim_start_matches("eps_trans=").parse().unwrap();
    // ground truth goes through text at 1e-9 m precision
    assert!(value < 1e-6, "{line}");
    assert_eq!(fs::read_to_string(report).unwrap(), stdout);
}

#[test]
fn robust_hector_run_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    simulate_corridor(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[hector.window]\nhalf_x = 0.8\n").unwrap();
    let mut trajectories = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        ok(&[
            "hector",
            "--robust",
            "--log",
            p(&dir.path().join("log.carmen")),
            "--relations",
            p(&dir.path().join("relations.txt")),
            "--config",
            p(&cfg),
            "--out",
            p(&out),
        ]);
        for f in ["map.pgm", "map.png", "run.jsonl", "report.txt"] {
            assert!(out.join(f).exists(), "{f} missing");
        }
        let jsonl = fs::read_to_string(out.join("run.jsonl")).unwrap();
        assert_eq!(jsonl.lines().count(), 60);
        for line in jsonl.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["method"], "hector-robust");
        }
        let report = fs::read_to_string(out.join("report.txt")).unwrap();
        let eps: f64 = report
            .lines()
            .find_map(|l| l.strip_prefix("eps_trans="))
            .unwrap()
            .parse()
            .unwrap();
        assert!(eps < 0.05, "{report}");
        trajectories.push(fs::read(out.join("trajectory.txt")).unwrap());
    }
    assert_eq!(trajectories[0], trajectories[1]);
}

#[test]
fn pf_run_honours_config_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    simulate_corridor(dir.path());
    let cfg = dir.path().join("pf.toml");
    fs::write(&cfg, "[pf]\nnum_particles = 2\n").unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let stdout = ok(&["pf", "--log", p(&dir.path().join("log.carmen")), "--config", p(&cfg), "--seed", seed, "--out", p(&out)]);
        assert!(stdout.starts_with("pf: 60 scans"), "{stdout}");
        fs::read(out.join("trajectory.txt")).unwrap()
    };
    let a = run("5", "a");
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 60);
    assert_eq!(a, run("5", "b"));
}

#[test]
fn match_reproduces_engine_results() {
    let dir = tempfile::tempdir().unwrap();
    let query = dir.path().join("q.csmq");
    let out = dir.path().join("r.csmr");
    let bytes = common::golden_query_bytes();
    fs::write(&query, &bytes).unwrap();
    let expected = CsmEngine::new(Algorithm::Optimized).run_packets(&from_bytes(&bytes).unwrap()).unwrap();
    for matcher in ["optimized", "reference", "oracle"] {
        let stdout = ok(&["match", "--query", p(&query), "--matcher", matcher, "--out", p(&out)]);
        assert_eq!(stdout.lines().count(), expected.len());
        assert_eq!(fs::read(&out).unwrap(), to_bytes(&expected), "{matcher}");
    }
    let golden = common::data_dir().join("golden.csmr");
    if golden.exists() {
        assert_eq!(fs::read(golden).unwrap(), to_bytes(&expected));
    }
}

#[test]
fn bad_inputs_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    simulate_corridor(dir.path());
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[pf]\nparticles = 4\n").unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["pf".into(), "--log".into(), p(&dir.path().join("log.carmen")).into(), "--config".into(), p(&cfg).into()],
        vec!["graph".into(), "--log".into(), p(&dir.path().join("missing.carmen")).into()],
        vec!["simulate".into(), "--scene".into(), "atrium".into(), "--out".into(), p(&dir.path().join("x")).into()],
        vec!["match".into(), "--query".into(), p(&dir.path().join("ground_truth.txt")).into()],
    ];
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = corrslam(&args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "), "{args:?}");
    }
}
