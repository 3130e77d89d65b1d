use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_klflow");

const BASE: &str = r#"
[flow]
kind = "mmd_wgf"
tau = 0.1
steps = 20
seed = 7

[kernel]
family = "gaussian"
sigma = 1.0

[target]
kind = "empirical"
path = "target.csv"

[init]
kind = "gaussian"
n = 30
mean = [2.0]
covariance = [[1.0]]
"#;

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let target: String = (0..40)
        .map(|i| format!("{}\n", -2.0 + 0.1 * i as f64))
        .collect();
    fs::write(dir.path().join("target.csv"), format!("x_1\n{target}")).unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn run(dir: &Path, out: &str) -> std::process::Output {
    Command::new(BIN)
        .arg("run")
        .arg(dir.join("run.toml"))
        .arg("--out")
        .arg(dir.join(out))
        .output()
        .unwrap()
}

fn metrics(dir: &Path, out: &str) -> Vec<Vec<String>> {
    let text = fs::read_to_string(dir.join(out).join("metrics.csv")).unwrap();
    text.lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn run_writes_all_outputs() {
    let dir = workspace(BASE);
    let out = run(dir.path(), "out");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = metrics(dir.path(), "out");
    assert_eq!(rows[0].join(","), "step,time,mmd2,ksd2,mean_err,cov_err");
    assert_eq!(rows.len(), 22);
    assert!(rows[1..].iter().all(|r| r[3].is_empty()));

    let ensemble = fs::read_to_string(dir.path().join("out/final_ensemble.csv")).unwrap();
    assert!(ensemble.starts_with("x_1,weight\n"));
    assert_eq!(ensemble.lines().count(), 31);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["flow"]["seed"], 7);
    assert_eq!(manifest["config"]["flow"]["kind"], "mmd_wgf");
    assert_eq!(manifest["final_record"]["step"], 20);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert!(manifest["error"].is_null());
}

#[test]
fn identical_configs_give_identical_metrics() {
    let config = BASE.replace(
        "kind = \"mmd_wgf\"",
        "kind = \"wfr_ift\"\nbeta = 0.5\ninjection = 4",
    );
    let dir = workspace(&config);
    assert!(run(dir.path(), "a").status.success());
    assert!(run(dir.path(), "b").status.success());
    let a = fs::read(dir.path().join("a/metrics.csv")).unwrap();
    let b = fs::read(dir.path().join("b/metrics.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = workspace(BASE);
    for (threads, out) in [("1", "one"), ("4", "four")] {
        let status = Command::new(BIN)
            .env("KLFLOW_THREADS", threads)
            .args([
                "run",
                dir.path().join("run.toml").to_str().unwrap(),
                "--out",
            ])
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(
        fs::read(dir.path().join("one/metrics.csv")).unwrap(),
        fs::read(dir.path().join("four/metrics.csv")).unwrap()
    );
}

#[test]
fn birth_death_metrics_follow_exponential_decay() {
    let dir = workspace(&BASE.replace("kind = \"mmd_wgf\"", "kind = \"fr_exact\""));
    assert!(run(dir.path(), "out").status.success());
    let rows = metrics(dir.path(), "out");
    let m0: f64 = rows[1][2].parse().unwrap();
    for r in &rows[1..] {
        let t: f64 = r[1].parse().unwrap();
        let m: f64 = r[2].parse().unwrap();
        let expected = (-2.0 * t).exp() * m0;
        assert!(
            (m - expected).abs() <= 1e-10 * expected,
            "t = {t}: {m} vs {expected}"
        );
    }
}

#[test]
fn invalid_configs_are_rejected() {
    for (config, needle) in [
        (BASE.replace("steps = 20", "steps = 0"), "steps"),
        (BASE.replace("tau = 0.1", "tau = -0.1"), "tau"),
        (
            BASE.replace(
                "kind = \"mmd_wgf\"",
                "kind = \"wfr_ift\"\nbeta = 0.5\ninjection = 0",
            ),
            "reaction mass has nowhere to go",
        ),
        (
            BASE.replace("kind = \"mmd_wgf\"", "kind = \"ksd_wgf\""),
            "score",
        ),
        (
            BASE.replace("sigma = 1.0", "sigma = 1.0\nbandwidth = 2.0"),
            "bandwidth",
        ),
    ] {
        let dir = workspace(&config);
        let out = run(dir.path(), "out");
        assert!(!out.status.success());
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains(needle), "expected `{needle}` in: {stderr}");
        assert!(!dir.path().join("out/metrics.csv").exists());
    }
}

#[test]
fn check_scopes() {
    let out = Command::new(BIN)
        .args(["check", "kernels"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 4);

    let out = Command::new(BIN)
        .args(["check", "oracles", "--sigma", "-1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| !l.starts_with("PASS")));
    assert!(stdout.contains("bandwidth must be positive"), "{stdout}");
}
