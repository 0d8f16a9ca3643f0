use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ridgeapprox(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ridgeapprox"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn curve_writes_headed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{ "model": { "kind": "quadratic", "matrix": [[2.0, 0.3, 0.0], [0.3, -1.0, 0.0], [0.0, 0.0, 0.5]] },
             "sampling": { "k": 50, "m": [1, 4], "n_val": 100, "seed": 3 } }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = ridgeapprox(&["curve"], &cfg, &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(out.join("error_curve.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# experiment: curve"));
    assert!(lines.iter().any(|l| l.starts_with("# config_sha256: ")));
    assert!(lines.contains(&"# seed: 3"));
    let data: Vec<&str> = lines.into_iter().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        data[0],
        "r,M,opt_bound,kl_bound,mse,mse_se,kl_mse,kl_mse_se,exact_mse,exact_mse_se,beyond_rank_ceiling"
    );
    // ranks 0..=3, two values of M
    assert_eq!(data.len(), 1 + 4 * 2);
    let full_rank: Vec<&str> = data.last().unwrap().split(',').collect();
    assert_eq!(full_rank[0], "3");
    assert!(full_rank[4].parse::<f64>().unwrap() < 1e-20);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{ "model": { "kind": "sines", "amplitudes": [1.0, 0.5], "frequencies": [1.0, 2.0] }, "sampling": { "k": 20 } }"#).unwrap();
    let read = |seed: &str| {
        let out = dir.path().join(format!("s{seed}"));
        let run = Command::new(env!("CARGO_BIN_EXE_ridgeapprox"))
            .args(["spectrum", "--seed", seed, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(run.status.success());
        fs::read_to_string(out.join("h_matrix.txt")).unwrap()
    };
    let (a, b) = (read("1"), read("2"));
    assert!(a.contains("# seed: 1") && b.contains("# seed: 2"));
    assert_ne!(a, b);
}

#[test]
fn configuration_problems_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let missing = ridgeapprox(&["curve"], &dir.path().join("absent.json"), &out);
    assert_eq!(missing.status.code(), Some(2));

    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(ridgeapprox(&["curve"], &cfg, &out).status.code(), Some(2));

    let cfg = dir.path().join("correlated.json");
    fs::write(
        &cfg,
        r#"{ "model": { "kind": "linear", "matrix": [[1.0, 1.0]] },
             "measure": { "kind": "explicit", "mean": [0.0, 0.0], "covariance": [[1.0, 0.5], [0.5, 1.0]] } }"#,
    )
    .unwrap();
    let run = ridgeapprox(&["sobol"], &cfg, &out);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("curve"));
}

#[test]
fn numerical_failures_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("flat.json");
    // a constant model has zero output variance
    fs::write(&cfg, r#"{ "model": { "kind": "linear", "matrix": [[0.0, 0.0]] }, "sampling": { "sobol_outer": 50, "sobol_inner": 2, "k": 10 } }"#).unwrap();
    let run = ridgeapprox(&["sobol"], &cfg, &dir.path().join("out"));
    assert_eq!(run.status.code(), Some(3), "{}", String::from_utf8_lossy(&run.stderr));
}
