use std::path::Path;
use std::process::{Command, Output};

fn okalab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_okalab"))
        .args(args)
        .env("OKALAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn curvature_of_unit_sphere() {
    let out = okalab(&["curvature", "--domain", "ball", "--params", "m=3,R=1", "--point", "1,0,0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["schema_version"], 1);
    for k in v["kappas"].as_array().unwrap() {
        assert!((k.as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
    assert!((v["H"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    for key in ["implicit", "frame", "graph"] {
        assert!((v["method_agreement"][key].as_f64().unwrap() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn analyze_disc() {
    let out = okalab(&["analyze", "--f", "x1^2+x2^2-1", "--dim", "2", "--point", "0.3,0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["distance"]["d"].as_f64().unwrap() - 0.7).abs() < 1e-12);
    assert_eq!(v["distance"]["medial_axis"], false);
    assert!((v["frame"]["kappas"][0].as_f64().unwrap() - 1.0).abs() < 1e-10);
    // negative coordinates parse as values, not flags
    let out = okalab(&["analyze", "--f", "x1^2+x2^2-1", "--dim", "2", "--point", "-0.3,0"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(okalab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(okalab(&["curvature"]).status.code(), Some(2));
    assert_eq!(okalab(&["inradius", "--domain", "nope"]).status.code(), Some(2));
    assert_eq!(okalab(&["inradius", "--domain", "ball", "--params", "m=3,q=2"]).status.code(), Some(2));
    // off the boundary
    let out = okalab(&["curvature", "--domain", "ball", "--params", "m=3", "--point", "0.5,0,0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"domain": {"builtin": "ball", "params": {"m": 3}}, "tolerance": 1e-3}"#).unwrap();
    let out = okalab(&["inradius", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tolerance"));

    std::fs::write(&cfg, r#"{"command": "scan", "domain": {"builtin": "ball", "params": {"m": 3}}}"#).unwrap();
    assert_eq!(okalab(&["inradius", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn help_exits_0() {
    let out = okalab(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("verify"));
}

#[test]
fn config_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"command": "scan", "domain": {"builtin": "ball", "params": {"m": 3}}, "grid_n": 4, "tol": 0.5}"#,
    )
    .unwrap();
    let out = okalab(&["scan", "--config", cfg.to_str().unwrap(), "--tol", "0.25", "--potential", "neg_d"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["tol"], 0.25);
    assert_eq!(v["n_grid"], 64);
    assert_eq!(v["potential"], "neg_d");
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let j = dir.path().join(format!("r{run}.json"));
        let c = dir.path().join(format!("r{run}.csv"));
        let out = okalab(&[
            "scan", "--domain", "annulus", "--params", "m=3,r=0.1", "--potential", "neg_log_d", "--grid-n", "5",
            "--output", j.to_str().unwrap(), "--csv", c.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
        outputs.push((read(&j), read(&c)));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert!(csv.starts_with("x1,x2,x3,d,margin,flag\n"));
}

#[test]
fn strict_turns_findings_into_exit_1() {
    let args = ["scan", "--domain", "annulus", "--params", "m=3,r=0.1", "--potential", "neg_log_d", "--radial", "0.1,1,40", "--direction", "0.48,0.6,0.64"];
    let out = okalab(&args);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["verdict"], false);
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(okalab(&strict).status.code(), Some(1));

    let ok = ["scan", "--domain", "annulus", "--params", "m=3,r=0.1", "--potential", "d_pow", "--grid-n", "6", "--strict"];
    assert_eq!(okalab(&ok).status.code(), Some(0));
}

#[test]
fn verify_sh_on_annulus() {
    let out = okalab(&["verify", "sh", "--domain", "annulus", "--params", "m=3,r=0.1", "--grid-n", "8", "--samples", "20", "--strict"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["d_pow"]["n_violations"], 0);
    assert_eq!(v["mean_curvature_condition"], false);
    assert!(v["neg_log_d"]["n_violations"].as_u64().unwrap() > 0);
    assert_eq!(v["consistent"], true);
}

#[test]
fn counterexample_annulus_matches_interval() {
    let out = okalab(&["counterexample", "annulus", "--params", "m=3,r=0.1", "--shells", "60", "--strict"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["interval"][0].as_f64().unwrap() - 0.2).abs() < 1e-12);
    assert!((v["interval"][1].as_f64().unwrap() - 0.55).abs() < 1e-12);
    assert!(v["mismatches"].as_array().unwrap().is_empty());
}

#[test]
fn curvature_selection_report() {
    let out = okalab(&["verify", "curvature-selection", "--domain", "complex_egg", "--samples", "10", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["records"].as_array().unwrap().len(), 10);
    assert!(v["worst_drop_min_sum"].as_f64().unwrap() > 0.0);
    assert!(v["worst_nonneg_count"].as_u64().unwrap() >= 1);
    assert_eq!(v["violations"], 0);
}

#[test]
fn meanconvex_and_oka_verdicts() {
    let out = okalab(&["verify", "meanconvex", "--domain", "annulus", "--params", "m=3,r=0.1", "--grid-n", "6", "--samples", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["mean_convex"], false);
    assert_eq!(v["consistent"], true);

    let out = okalab(&["verify", "oka", "--domain", "ball", "--params", "m=4", "--grid-n", "5", "--samples", "4", "--strict"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["pseudoconvex"], true);
    assert_eq!(v["certificates_hold"], true);
    assert_eq!(v["certificates"].as_array().unwrap().len(), 4);
}

#[test]
fn medial_axis_and_inradius() {
    let out = okalab(&["medial-axis", "--domain", "ellipsoid", "--params", "a1=2,a2=1,a3=1", "--grid-n", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["n_flagged"].as_u64().unwrap() > 0);

    let out = okalab(&["inradius", "--domain", "ball", "--params", "m=2,R=2"]);
    assert_eq!(out.status.code(), Some(0));
    assert!((json(&out)["inradius"].as_f64().unwrap() - 2.0).abs() < 1e-6);
}

#[test]
fn bad_expression_prints_grammar() {
    let out = okalab(&["analyze", "--f", "x1^2 + y", "--dim", "2", "--point", "0,0"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown identifier"));
    assert!(err.contains("normsq"));
}
