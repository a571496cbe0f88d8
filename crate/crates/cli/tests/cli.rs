use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn mind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mind"))
        .args(args)
        .env_remove("MIND_SEED")
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mind-cli-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

/// Small table with a continuous target driven by two features and a label.
fn table() -> PathBuf {
    let path = scratch("table.csv");
    let mut s = String::from("x1,x2,color,y\n");
    let mut state = 12345u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..400 {
        let (a, b, c) = (next() - 0.5, next() - 0.5, next());
        let color = if c < 0.3 { "red" } else if c < 0.6 { "green" } else { "blue" };
        let y = a + 0.5 * b + 0.3 * (next() - 0.5) + if color == "red" { 0.2 } else { 0.0 };
        s.push_str(&format!("{a},{b},{color},{y}\n"));
    }
    std::fs::write(&path, s).unwrap();
    path
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn key_paths(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                out.push(p.clone());
                key_paths(v, &p, out);
            }
        }
        Value::Array(a) => {
            if let Some(first) = a.iter().find(|x| x.is_object()) {
                key_paths(first, &format!("{prefix}[]"), out);
            }
        }
        _ => {}
    }
}

fn check_golden(name: &str, report: &Value) {
    let mut keys = Vec::new();
    key_paths(report, "", &mut keys);
    keys.sort();
    keys.dedup();
    let actual = keys.join("\n") + "\n";
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).expect("golden file present");
    assert_eq!(
        actual, expected,
        "report keys changed; bump the schema version and regenerate with UPDATE_GOLDEN=1"
    );
}

#[test]
fn estimate_mi_report_keys_match_golden() {
    let input = table();
    let out = mind(&["estimate-mi", "--input", input.to_str().unwrap(), "--target", "y", "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    assert_eq!(report["schema"], "1.0.0");
    for key in ["mi_nats", "r2_max", "rmse_min"] {
        assert!(report["result"][key].is_number(), "{key}");
    }
    assert_eq!(report["config"]["estimator"]["solver"]["tol_g"], 1e-3);
    assert_eq!(report["config"]["estimator"]["solver"]["mc_batch"], 4096);
    check_golden("estimate_mi.keys", &report);
}

#[test]
fn other_reports_match_golden() {
    let input = table();
    let bounds = json(&mind(&["bounds", "--mi", "1.50", "--var-y", "2.0"]));
    check_golden("bounds.keys", &bounds);
    let entropy = json(&mind(&["copula-entropy", "--input", input.to_str().unwrap(), "--columns", "x1,y"]));
    check_golden("copula_entropy.keys", &entropy);
    let spec = json(&mind(&["spec-dump", "--dim", "2"]));
    check_golden("spec_dump.keys", &spec);
    for r in [&bounds, &entropy, &spec] {
        assert_eq!(r["schema"], "1.0.0");
    }
}

#[test]
fn bounds_reproduce_table_value() {
    let r = json(&mind(&["bounds", "--mi", "1.50", "--var-y", "1.0"]));
    let r2 = r["result"]["r2_max"].as_f64().unwrap();
    assert_eq!(format!("{r2:.2}"), "0.95");
    assert!(r["result"]["rmse_min"].is_number());
}

#[test]
fn reports_are_identical_apart_from_timestamp() {
    let input = table();
    let run = || {
        let mut r = json(&mind(&["estimate-mi", "--input", input.to_str().unwrap(), "--target", "y"]));
        r.as_object_mut().unwrap().remove("generated_at");
        serde_json::to_vec(&r).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn seed_falls_back_to_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_mind"))
        .args(["spec-dump", "--dim", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let input = table();
    let out = Command::new(env!("CARGO_BIN_EXE_mind"))
        .args(["copula-entropy", "--input", input.to_str().unwrap(), "--columns", "x1,x2"])
        .env("MIND_SEED", "31")
        .output()
        .unwrap();
    assert_eq!(json(&out)["config"]["solver"]["seed"], 31);
}

#[test]
fn output_file_and_exit_codes() {
    let input = table();
    let path = scratch("report.json");
    let out = mind(&[
        "estimate-mi",
        "--input",
        input.to_str().unwrap(),
        "--target",
        "y",
        "--max-iters",
        "1",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let report: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(report["result"]["converged"], false);

    let usage = mind(&["bounds"]);
    assert_eq!(usage.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&usage.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "usage");

    let missing = mind(&["estimate-mi", "--input", "/definitely/not/here.csv", "--target", "y"]);
    assert_eq!(missing.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["schema"], "1.0.0");

    let unknown = mind(&["estimate-mi", "--input", input.to_str().unwrap(), "--target", "nope"]);
    assert_eq!(unknown.status.code(), Some(3));
}

#[test]
fn bench_writes_csv_with_truth() {
    let out = mind(&["bench-gaussian", "--dim", "2", "--rho", "0.5", "--n", "500", "--estimators", "mind,ksg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "estimator,d,rho,n,seed,estimate,truth,abs_error,wall_ms");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    let truth: f64 = rows[0].split(',').nth(6).unwrap().parse().unwrap();
    assert!((truth - 2.0 * -0.5 * (0.75f64).ln()).abs() < 1e-12);
}

#[test]
fn augment_flag_adds_a_coordinate() {
    let input = table();
    let out = mind(&[
        "estimate-mi",
        "--input",
        input.to_str().unwrap(),
        "--target",
        "y",
        "--features",
        "x1",
        "--augment",
        "abs:x1:median",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["result"]["d_x"], 2);
    let bad = mind(&["estimate-mi", "--input", input.to_str().unwrap(), "--target", "y", "--augment", "abs:zz"]);
    assert_eq!(bad.status.code(), Some(2));
}
