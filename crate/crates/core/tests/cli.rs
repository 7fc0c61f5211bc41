use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chargof"))
        .args(args)
        .output()
        .expect("run chargof")
}

fn error_of(out: &Output) -> (i32, String) {
    let v: Value = serde_json::from_slice(&out.stderr).expect("error JSON on stderr");
    let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, ["code", "message"]);
    assert!(out.stdout.is_empty());
    (
        out.status.code().unwrap(),
        v["code"].as_str().unwrap().to_string(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn exp_data(dir: &Path) -> String {
    let values: Vec<String> = (1..=60)
        .map(|i| format!("{:.6}", -(1.0 - (i as f64 - 0.5) / 60.0f64).ln() * 1.3))
        .collect();
    write(dir, "data.csv", &format!("x\n{}\n", values.join("\n")))
}

#[test]
fn test_report_has_exact_keys() {
    let dir = tempfile::tempdir().unwrap();
    let data = exp_data(dir.path());
    let out = run(&[
        "test",
        "--spec",
        "puri-rubin",
        "--input",
        &data,
        "--N",
        "200",
        "--K",
        "50",
        "--draws",
        "20000",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(
        keys,
        [
            "estimate",
            "mc_se",
            "n",
            "p_value",
            "scaled_statistic",
            "seed",
            "spec_id",
            "spectrum",
            "statistic",
            "versions"
        ]
    );
    let p = v["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    let n = v["n"].as_f64().unwrap();
    let (stat, scaled) = (
        v["statistic"].as_f64().unwrap(),
        v["scaled_statistic"].as_f64().unwrap(),
    );
    assert!((scaled - n * stat).abs() <= 1e-12 * scaled.abs().max(1.0));
    assert_eq!(v["spectrum"]["source"], "inline");
}

#[test]
fn test_error_paths() {
    let dir = tempfile::tempdir().unwrap();
    let data = exp_data(dir.path());
    assert_eq!(
        error_of(&run(&["test", "--spec", "nosuch", "--input", &data])),
        (2, "UnknownSpec".into())
    );
    let neg = write(dir.path(), "neg.csv", "1.0\n-1\n2.5\n3\n");
    assert_eq!(
        error_of(&run(&["test", "--spec", "puri-rubin", "--input", &neg])),
        (3, "SupportError".into())
    );
    let missing = dir.path().join("absent.csv");
    assert_eq!(
        error_of(&run(&[
            "test",
            "--spec",
            "polya",
            "--input",
            missing.to_str().unwrap()
        ])),
        (5, "IOError".into())
    );
    let bad = write(dir.path(), "bad.csv", "1\nabc\n2\n");
    assert_eq!(
        error_of(&run(&["test", "--spec", "polya", "--input", &bad])).0,
        3
    );
    assert_eq!(
        error_of(&run(&["test", "--spec", "polya"])),
        (2, "usage".into())
    );
}

#[test]
fn eigen_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = run(&[
            "eigen",
            "--spec",
            "puri-rubin",
            "--N",
            "300",
            "--K",
            "100",
            "--kernel",
            "star",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    let eig: Vec<f64> = v["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(eig.len(), 100);
    assert!(eig.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(v["coefficient"], 6.0);

    // the cache feeds the test command
    let data = exp_data(dir.path());
    let out = run(&[
        "test",
        "--spec",
        "puri-rubin",
        "--input",
        &data,
        "--eigen-cache",
        a.to_str().unwrap(),
        "--draws",
        "20000",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["spectrum"]["N"], 300);
    // a cache for another spec is rejected
    let out = run(&[
        "test",
        "--spec",
        "polya",
        "--input",
        &data,
        "--eigen-cache",
        a.to_str().unwrap(),
    ]);
    assert_eq!(error_of(&out), (3, "CacheError".into()));
}

#[test]
fn eigen_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.json");
    assert_eq!(
        error_of(&run(&[
            "eigen",
            "--spec",
            "polya",
            "--N",
            "8",
            "--out",
            out.to_str().unwrap()
        ])),
        (2, "TooCoarse".into())
    );
    let blocked = dir.path().join("no/such/dir/x.json");
    let r = run(&[
        "eigen",
        "--spec",
        "puri-rubin",
        "--N",
        "20",
        "--K",
        "5",
        "--out",
        blocked.to_str().unwrap(),
    ]);
    assert_eq!(error_of(&r), (5, "IOError".into()));
}

#[test]
fn quantiles_from_chi_square_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = write(
        dir.path(),
        "chi.json",
        r#"{"spec_id":"chi2","kernel_tag":"star","N":16,"K":1,"coefficient":1.0,"eigenvalues":[1.0],"trace_estimate":1.0,"tail_mass":0.0}"#,
    );
    let out = run(&["quantiles", "--eigen-cache", &cache, "--levels", "0.95"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    let (q, v) = row.split_once(',').unwrap();
    assert_eq!(q, "0.95");
    assert!((v.parse::<f64>().unwrap() - 3.841).abs() < 0.02, "{row}");

    let out = run(&[
        "quantiles",
        "--eigen-cache",
        &cache,
        "--levels",
        "0.90,0.95,0.99",
        "--draws",
        "100000",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let vals: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap().1.parse().unwrap())
        .collect();
    assert_eq!(vals.len(), 3);
    assert!(vals[0] < vals[1] && vals[1] < vals[2]);

    let corrupt = write(
        dir.path(),
        "bad.json",
        r#"{"spec_id":"chi2","kernel_tag":"st"#,
    );
    assert_eq!(
        error_of(&run(&["quantiles", "--eigen-cache", &corrupt])),
        (3, "CacheError".into())
    );
    assert_eq!(
        error_of(&run(&[
            "quantiles",
            "--eigen-cache",
            &cache,
            "--levels",
            "1.5"
        ])),
        (2, "InvalidQuantile".into())
    );
}

#[test]
fn simulate_contract() {
    let out = run(&[
        "simulate",
        "--spec",
        "puri-rubin",
        "--mode",
        "null",
        "--n",
        "60",
        "--reps",
        "100",
        "--N",
        "200",
        "--draws",
        "20000",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let ks = v["ks_distance"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&ks));
    assert_eq!(v["statistics"].as_array().unwrap().len(), 100);

    assert_eq!(
        error_of(&run(&[
            "simulate",
            "--spec",
            "puri-rubin",
            "--mode",
            "effect"
        ])),
        (2, "NoEffectExpected".into())
    );
    assert_eq!(
        error_of(&run(&[
            "simulate",
            "--spec",
            "puri-rubin",
            "--mode",
            "null",
            "--reps",
            "10"
        ])),
        (2, "precondition".into())
    );

    let out = run(&[
        "simulate", "--spec", "polya", "--mode", "effect", "--N", "200", "--K", "50", "--draws",
        "100000",
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["separation"].as_f64().unwrap() > 3.0);
}

#[test]
fn simulate_dump_and_power() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("stats.csv");
    let out = run(&[
        "simulate",
        "--spec",
        "puri-rubin",
        "--mode",
        "power",
        "--alternative",
        "weibull",
        "--shape",
        "2",
        "--n",
        "100",
        "--reps",
        "100",
        "--N",
        "200",
        "--draws",
        "20000",
        "--dump",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rate = v["rejection_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));
    assert_eq!(std::fs::read_to_string(&dump).unwrap().lines().count(), 101);
}

#[test]
fn diagnose_reports_pass() {
    let out = run(&[
        "diagnose", "--spec", "polya", "--reps", "20000", "--seed", "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(
        error_of(&run(&["diagnose", "--spec", "polya", "--reps", "50"])),
        (2, "InsufficientReps".into())
    );
}
