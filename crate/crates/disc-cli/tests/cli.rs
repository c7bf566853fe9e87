//! End-to-end CLI checks through the built binary.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn disc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_disc"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("disc-cli-tests");
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn gen_solve_report_round_trip() {
    let inst = tmp("round.txt");
    let report = tmp("round.json");
    let out = disc()
        .args(["gen", "--kind", "sparse-signs", "--n", "20", "--m", "14", "--k", "3"])
        .args(["--seed", "11", "--out", inst.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // Canonical file round-trips byte-identically through gen with the same
    // seed.
    let text1 = fs::read_to_string(&inst).unwrap();
    disc()
        .args(["gen", "--kind", "sparse-signs", "--n", "20", "--m", "14", "--k", "3"])
        .args(["--seed", "11", "--out", inst.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(text1, fs::read_to_string(&inst).unwrap());

    let out = disc()
        .args(["solve", "--algo", "bf-basic", "--input", inst.to_str().unwrap()])
        .args(["--seed", "3", "--out", report.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["algo"], "bf-basic");
    assert_eq!(parsed["seed"], 3);
    assert!(parsed["disc_max"].as_f64().unwrap() >= 0.0);

    // Determinism end-to-end: identical invocation, identical report minus
    // wallclock.
    let report2 = tmp("round2.json");
    disc()
        .args(["solve", "--algo", "bf-basic", "--input", inst.to_str().unwrap()])
        .args(["--seed", "3", "--out", report2.to_str().unwrap()])
        .output()
        .unwrap();
    let mut a: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let mut b: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report2).unwrap()).unwrap();
    a["wallclock_ms"] = 0.into();
    b["wallclock_ms"] = 0.into();
    assert_eq!(a, b);
}

#[test]
fn malformed_instance_exits_3() {
    let bad = tmp("bad.txt");
    fs::write(&bad, "disc-instance v1 2 2 signs\n0 zzz 1\n").unwrap();
    let out = disc()
        .args(["solve", "--algo", "random", "--input", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn verify_sdp_counterexample() {
    // Stacked identities without the row factor: U = I violates by 4.
    let mut rows = Vec::new();
    for _ in 0..8 {
        for i in 0..4 {
            let mut r = vec![0.0; 4];
            r[i] = 1.0;
            rows.push(r);
        }
    }
    let eye: Vec<Vec<f64>> = (0..4)
        .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let spec = serde_json::json!({
        "h": 4, "kappa": 0.25, "eta": 0.25,
        "blocks": [{"rows": rows, "eta_s": 0.25, "include_row_factor": false}],
        "u": eye,
    });
    let path = tmp("counter.json");
    fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = disc()
        .args(["verify-sdp", "--spec", path.to_str().unwrap(), "--tol", "1e-6"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("violations"), "{text}");

    // A feasible spec solves and passes.
    let ok = serde_json::json!({ "h": 4, "kappa": 0.25, "eta": 0.25, "blocks": [] });
    fs::write(&path, serde_json::to_string(&ok).unwrap()).unwrap();
    let out = disc()
        .args(["verify-sdp", "--spec", path.to_str().unwrap(), "--tol", "1e-6"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn bench_writes_rows_in_suite_order() {
    let suite = tmp("suite.json");
    let csv = tmp("results.csv");
    fs::write(
        &suite,
        serde_json::json!([{
            "gen": {"kind": "sparse-signs", "n": 16, "m": 12, "k": 3, "seed": 5},
            "algos": ["bf-basic", "random"],
            "seeds": [0, 1],
        }])
        .to_string(),
    )
    .unwrap();
    let out = disc()
        .env("DISC_THREADS", "2")
        .args(["bench", "--suite", suite.to_str().unwrap(), "--out", csv.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("kind,n,m,k,gen_seed,algo,seed,disc,fail,steps,wallclock_ms"));
    assert!(lines[1].contains(",bf-basic,0,"));
    assert!(lines[2].contains(",bf-basic,1,"));
    assert!(lines[3].contains(",random,0,"));
    assert!(lines[4].contains(",random,1,"));
}

#[test]
fn analyze_trace_checks() {
    let inst = tmp("trace_inst.txt");
    let report = tmp("trace_rep.json");
    let trace = tmp("trace.bin");
    disc()
        .args(["gen", "--kind", "sparse-signs", "--n", "32", "--m", "8", "--k", "4"])
        .args(["--seed", "2", "--out", inst.to_str().unwrap()])
        .output()
        .unwrap();
    let out = disc()
        .args(["solve", "--algo", "bf-basic", "--input", inst.to_str().unwrap()])
        .args(["--seed", "4", "--mode", "fidelity"])
        .args(["--out", report.to_str().unwrap(), "--trace", trace.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for check in ["drift", "potential", "decoupling"] {
        let out = disc()
            .args(["analyze", "--trace", trace.to_str().unwrap(), "--check", check])
            .output()
            .unwrap();
        assert!(out.status.success(), "{check}: {}", String::from_utf8_lossy(&out.stderr));
        let parsed: serde_json::Value =
            serde_json::from_slice(&out.stdout).unwrap_or_else(|_| panic!("{check} output not json"));
        assert_eq!(parsed["check"], check);
    }
}
