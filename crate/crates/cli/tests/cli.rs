//! End-to-end tests of the stoshield binary: fixtures, exit codes,
//! manifests, and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_stoshield")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn stoshield")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("stoshield-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn importance_reproduces_three_state_values() {
    let out = tmp("imp.csv");
    let output = run(&[
        "importance",
        fixture("three_state.json").to_str().unwrap(),
        "--budget",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("k,from,to,rate,sigma,R_k,rank\n"));
    // rounded paper values appear in the exported data
    let rounded: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(5).unwrap().parse::<f64>().unwrap())
        .map(|x| (x * 1e4).round() / 1e4)
        .collect();
    assert_eq!(rounded, vec![0.0417, 0.0417, 0.2917, 0.2917]);

    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("plan.json")).unwrap())
            .unwrap();
    assert_eq!(plan["neglected"], serde_json::json!([0, 1]));
    assert!((plan["predicted_error"].as_f64().unwrap() - 1.0 / 12.0).abs() < 1e-12);

    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.with_extension("manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["config"]["command"], "importance");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn importance_budget_zero_and_full() {
    let out = tmp("imp0.csv");
    let net = fixture("three_state.json");
    let ok = run(&["importance", net.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(ok.status.success());
    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("plan.json")).unwrap())
            .unwrap();
    assert_eq!(plan["neglected"], serde_json::json!([]));
    assert_eq!(plan["predicted_error"], serde_json::json!(0.0));

    let out4 = tmp("imp4.csv");
    let ok = run(&[
        "importance",
        net.to_str().unwrap(),
        "--budget",
        "4",
        "--out",
        out4.to_str().unwrap(),
    ]);
    assert!(ok.status.success());
    let plan: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out4.with_extension("plan.json")).unwrap(),
    )
    .unwrap();
    let total = plan["total_variance"].as_f64().unwrap();
    let err = plan["predicted_error"].as_f64().unwrap();
    assert!((total - 2.0 / 3.0).abs() < 1e-10);
    assert!((err - total).abs() <= 1e-12);
}

#[test]
fn schema_violations_exit_2() {
    let bad = tmp("bad.json");
    std::fs::write(&bad, r#"{"nodes": 2, "edges": [], "wat": true}"#).unwrap();
    let out = tmp("never.csv");
    let output =
        run(&["importance", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&output.stderr);
    assert!(msg.contains("wat") || msg.contains("unknown field"), "stderr: {msg}");

    let neg = tmp("neg.json");
    std::fs::write(
        &neg,
        r#"{"nodes": 2, "edges": [{"from":0,"to":1,"rate":0.0},{"from":1,"to":0,"rate":1.0}]}"#,
    )
    .unwrap();
    let output = run(&["importance", neg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn simulate_empty_plan_is_exact_zero() {
    let out = tmp("sim0.json");
    let output = run(&[
        "simulate",
        fixture("three_state.json").to_str().unwrap(),
        "--mode",
        "ou",
        "--dt",
        "1e-3",
        "--t-final",
        "20",
        "--burn-in",
        "1",
        "--trials",
        "2",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(stats["empirical"], serde_json::json!(0.0));
    assert_eq!(stats["predicted"], serde_json::json!(0.0));
}

#[test]
fn simulate_unstable_dt_exits_3_with_suggestion() {
    let out = tmp("sim_bad.json");
    let output = run(&[
        "simulate",
        fixture("three_state.json").to_str().unwrap(),
        "--mode",
        "ou",
        "--dt",
        "0.9",
        "--t-final",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("suggested"));
}

#[test]
fn simulate_ssa_and_tauleap_agree() {
    let ssa_out = tmp("ssa.json");
    let output = run(&[
        "simulate",
        fixture("two_state.json").to_str().unwrap(),
        "--mode",
        "ssa",
        "--ntot",
        "200",
        "--t-final",
        "300",
        "--burn-in",
        "20",
        "--seed",
        "3",
        "--out",
        ssa_out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let tau_out = tmp("tau.json");
    let output = run(&[
        "simulate",
        fixture("two_state.json").to_str().unwrap(),
        "--mode",
        "tauleap",
        "--tau",
        "0.05",
        "--ntot",
        "200",
        "--t-final",
        "300",
        "--burn-in",
        "20",
        "--seed",
        "4",
        "--out",
        tau_out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let ssa: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&ssa_out).unwrap()).unwrap();
    let tau: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&tau_out).unwrap()).unwrap();
    for i in 0..2 {
        let a = ssa["stationary_mean"][i].as_f64().unwrap();
        let b = tau["stationary_mean"][i].as_f64().unwrap();
        // both should sit near 100; allow generous Monte Carlo slack
        assert!((a - b).abs() < 5.0, "state {i}: {a} vs {b}");
    }
}

#[test]
fn hh_k_sweep_has_dominant_pair_and_normalized_occupancy() {
    let out = tmp("k.csv");
    let output = run(&[
        "hh", "--channel", "K", "--vmin", "-40", "--vmax", "-20", "--dv", "10", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    // group rows by voltage; edge 6 must dominate edges 0..6
    let mut by_v: std::collections::BTreeMap<String, Vec<(usize, f64)>> = Default::default();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        by_v.entry(cols[0].to_string()).or_default().push((
            cols[1].parse().unwrap(),
            cols[4].parse().unwrap(),
        ));
    }
    assert_eq!(by_v.len(), 3);
    for rows in by_v.values() {
        let r6 = rows.iter().find(|(k, _)| *k == 6).unwrap().1;
        for &(k, r) in rows {
            if k < 6 {
                assert!(r6 > r, "edge {k} beats the conducting pair");
            }
        }
    }
    let occ = std::fs::read_to_string(tmp("k_occupancy.csv")).unwrap();
    let mut sums: std::collections::BTreeMap<String, f64> = Default::default();
    for line in occ.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        *sums.entry(cols[0].to_string()).or_default() += cols[2].parse::<f64>().unwrap();
    }
    for (v, s) in sums {
        assert!((s - 1.0).abs() < 1e-10, "V={v}: occupancy sums to {s}");
    }
}

#[test]
fn ensemble_invalid_parameters_exit_2() {
    let out = tmp("ens.csv");
    let output = run(&[
        "ensemble",
        "--experiment",
        "clusters",
        "--n",
        "2",
        "--p",
        "0.5",
        "--samples",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = tmp("det_a.csv");
    let b = tmp("det_b.csv");
    for out in [&a, &b] {
        let output = run(&[
            "ensemble",
            "--experiment",
            "graded",
            "--n",
            "25",
            "--p",
            "0.6",
            "--samples",
            "2",
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(a.with_extension("summary.json")).unwrap(),
        std::fs::read(b.with_extension("summary.json")).unwrap()
    );
}

#[test]
fn validate_fast_suite_passes() {
    let output = run(&["validate", "--suite", "fast"]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stdout));
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("all checks passed"));
    assert!(!text.contains("FAIL"));
}
